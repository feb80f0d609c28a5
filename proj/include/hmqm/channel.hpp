#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "hmqm/qrg.hpp"
#include "json.hpp"

namespace hmqm {

/// A single-output map applied to the state of one coin position.
class PositionChannel {
 public:
  virtual ~PositionChannel() = default;

  virtual DensityMatrix apply(const DensityMatrix& rho) const = 0;

  /// Wire form of the channel, or nullopt when it cannot leave the process.
  virtual std::optional<nlohmann::json> describe() const { return std::nullopt; }
};

using ChannelPtr = std::shared_ptr<const PositionChannel>;

/// Channels applied in order, first element first.
using ChannelPipeline = std::vector<ChannelPtr>;

/// rho -> v rho + (1 - v) 1/n with v = 1 - 2 beta, so the matching-averaged
/// error of a hidden-matching state becomes exactly beta.
class DepolarizingChannel final : public PositionChannel {
 public:
  explicit DepolarizingChannel(double beta);

  double beta() const noexcept { return beta_; }
  double weight() const noexcept { return weight_; }

  DensityMatrix apply(const DensityMatrix& rho) const override;
  std::optional<nlohmann::json> describe() const override;

 private:
  double beta_;
  double weight_;
};

/// Shared noiseless/no-op helper: nullptr when beta is zero.
ChannelPtr honest_noise(double beta);

DensityMatrix apply_pipeline(const ChannelPipeline& pipeline, DensityMatrix rho);

/// Throws InvalidArgument if any stage has no wire form.
nlohmann::json describe_pipeline(const ChannelPipeline& pipeline);
ChannelPipeline pipeline_from_json(const nlohmann::json& j);

}  // namespace hmqm
