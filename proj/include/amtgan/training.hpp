#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "amtgan/archive.hpp"
#include "amtgan/data.hpp"
#include "amtgan/diversity.hpp"
#include "amtgan/losses.hpp"
#include "amtgan/networks.hpp"

namespace amtgan::training {

struct TrainConfig {
  int epochs = 1;
  std::int64_t max_steps = 0;  // 0: no cap beyond epochs
  int batch_size = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  losses::LossWeights weights;
  diversity::DiversityConfig diversity;
  std::vector<int> ensemble_ids{0, 1};
  int holdout_id = 2;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  // false trains the ablation without the regularizer: H is the identity map and
  // the cycle term degenerates to the plain |G(G(x,y),x) - x|_1 cycle loss.
  bool use_regularizer = true;
  nets::GeneratorOptions generator;
  nets::DiscriminatorOptions discriminator;
  nets::RegularizerOptions regularizer;

  // Throws ConfigError. A zero learning rate is accepted (frozen training).
  void validate() const;
};

struct GanNets {
  nets::Generator g{nullptr};
  nets::Discriminator d_x{nullptr};
  nets::Discriminator d_y{nullptr};
  nets::Regularizer h{nullptr};

  static GanNets make(const TrainConfig& config);
};

struct StepTrace {
  std::int64_t step = 0;
  losses::LossReport report;
  double wall_ms = 0.0;
};

struct Checkpoint {
  std::int64_t step = 0;
  std::string config_hash;
  nlohmann::json config = nlohmann::json::object();  // full run configuration
  std::map<std::string, std::string> rng_states;
  Archive tensors;  // parameters and Adam moments
};

// Throws IntegrityError on corrupt or truncated files (nothing is partially loaded).
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// One D -> G -> H alternation per call.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<ImageFn> ensemble, data::TargetIdentity target);

  StepTrace train_step(const data::PairBatch& batch);

  // The three sub-steps, exposed so isolation can be checked between them.
  struct StepInputs {
    Tensor x, y, hm_xy, hm_yx;
  };
  StepInputs prepare(const data::PairBatch& batch) const;
  double update_discriminators(const StepInputs& in);
  losses::LossTerms update_generator(const StepInputs& in);
  losses::LossTerms update_regularizer(const StepInputs& in);

  GanNets& nets() { return nets_; }
  const TrainConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  Rng& rng() { return rng_; }

  // Captures parameters, Adam state and this trainer's rng.
  void save_state(Checkpoint& checkpoint) const;
  void load_state(const Checkpoint& checkpoint);

 private:
  ImageFn h_fn();

  TrainConfig config_;
  std::vector<ImageFn> ensemble_;
  data::TargetIdentity target_;
  GanNets nets_;
  nets::RandomPerceptual perceptual_;
  std::unique_ptr<torch::optim::Adam> opt_d_, opt_g_, opt_h_;
  Rng rng_;
  std::int64_t step_ = 0;
};

// Trace CSV: step, l_d, l_g_gan, l_g_reg, l_g_adv, l_g_make, l_idt, l_h_gan,
// l_h_adv, l_h_make, l_g_total, l_h_total, l_d_total, wall_ms.
void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const StepTrace& trace);

struct TrainRequest {
  TrainConfig config;
  nlohmann::json run_config = nlohmann::json::object();
  std::string config_hash;
  std::shared_ptr<const data::FaceSet> sources;
  std::shared_ptr<const data::FaceSet> references;
  std::vector<ImageFn> ensemble;
  data::TargetIdentity target;
  // Checkpoints go to run_dir/checkpoints, the trace to run_dir/trace.csv.
  // Empty: nothing is written.
  std::filesystem::path run_dir;
  std::optional<Checkpoint> resume_from;
  bool force = false;  // accept a resume checkpoint whose config hash differs
  std::int64_t stop_after = 0;  // >0: stop at this global step (for staged runs)
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<StepTrace> trace;
  std::filesystem::path last_checkpoint_path;
};

std::int64_t total_steps(const TrainConfig& config, std::size_t num_sources);

// Runs the alternation until the configured number of steps. On a non-finite
// loss throws DivergenceError naming the last checkpoint written.
TrainResult train(const TrainRequest& request);

}  // namespace amtgan::training
