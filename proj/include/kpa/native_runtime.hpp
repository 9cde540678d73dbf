#pragma once

#include "kpa/runtime.hpp"

namespace kpa {

/// CPU backend trained from scratch: hashed n-gram features feed a small
/// tanh encoder, a two-way head for pair classification and a per-position
/// softmax decoder over hashed output buckets for answer scoring and
/// generation. It keeps the runtime contract without downloading weights.
class NativeRuntime : public Runtime {
 public:
  std::string name() const override { return "native"; }

 protected:
  TrainedWeights do_finetune(const FinetuneRequest& request) const override;
  std::unique_ptr<Model> do_load(const CheckpointRef& checkpoint, Task task, const std::string& blob,
                                 const TrainConfig& config) const override;
  std::string initial_blob(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const override;
};

}  // namespace kpa
