#include "hmqm/channel.hpp"

#include "hmqm/adversary.hpp"
#include "hmqm/bounds.hpp"
#include "hmqm/error.hpp"

namespace hmqm {

DepolarizingChannel::DepolarizingChannel(double beta) : beta_(beta), weight_(depolarization_for_error(beta)) {}

DensityMatrix DepolarizingChannel::apply(const DensityMatrix& rho) const {
  const auto d = static_cast<Eigen::Index>(rho.dim());
  ComplexMatrix out = weight_ * rho.matrix();
  out.diagonal().array() += (1.0 - weight_) / static_cast<double>(d);
  return DensityMatrix::unchecked(std::move(out));
}

std::optional<nlohmann::json> DepolarizingChannel::describe() const {
  return nlohmann::json{{"kind", "depolarizing"}, {"beta", beta_}};
}

ChannelPtr honest_noise(double beta) {
  if (beta == 0.0) return nullptr;
  return std::make_shared<DepolarizingChannel>(beta);
}

DensityMatrix apply_pipeline(const ChannelPipeline& pipeline, DensityMatrix rho) {
  for (const ChannelPtr& stage : pipeline) {
    if (stage) rho = stage->apply(rho);
  }
  return rho;
}

nlohmann::json describe_pipeline(const ChannelPipeline& pipeline) {
  nlohmann::json out = nlohmann::json::array();
  for (const ChannelPtr& stage : pipeline) {
    if (!stage) continue;
    auto d = stage->describe();
    if (!d) throw InvalidArgument("channel has no wire description and cannot be applied remotely");
    out.push_back(std::move(*d));
  }
  return out;
}

ChannelPipeline pipeline_from_json(const nlohmann::json& j) {
  ChannelPipeline out;
  for (const auto& stage : j) {
    const auto kind = stage.at("kind").get<std::string>();
    if (kind == "depolarizing") {
      out.push_back(std::make_shared<DepolarizingChannel>(stage.at("beta").get<double>()));
    } else if (kind == "split_branch") {
      out.push_back(split_branch_from_json(stage));
    } else {
      throw InvalidArgument("unknown channel kind '" + kind + "'");
    }
  }
  return out;
}

}  // namespace hmqm
