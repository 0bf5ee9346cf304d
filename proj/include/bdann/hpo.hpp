#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bdann/pipeline.hpp"
#include "bdann/rng.hpp"
#include "bdann/serialize.hpp"

namespace bdann {

enum class DimKind { integer, real, log_real, categorical };
std::string_view to_string(DimKind k);
DimKind parse_dim_kind(std::string_view s);

struct Dimension {
  std::string name;
  DimKind kind = DimKind::real;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> choices;  // categorical only
};

using ParamValue = std::variant<std::int64_t, double, std::string>;
using Params = std::map<std::string, ParamValue>;

/// Typed accessors; integers read as reals where a real is asked for.
std::int64_t param_int(const Params& p, const std::string& name);
double param_real(const Params& p, const std::string& name);
const std::string& param_str(const Params& p, const std::string& name);

class SearchSpace {
 public:
  SearchSpace& add_int(std::string name, std::int64_t lo, std::int64_t hi);
  SearchSpace& add_real(std::string name, double lo, double hi);
  SearchSpace& add_log_real(std::string name, double lo, double hi);
  SearchSpace& add_categorical(std::string name, std::vector<std::string> choices);

  const std::vector<Dimension>& dims() const { return dims_; }
  bool empty() const { return dims_.empty(); }
  /// Throws ConfigError on unordered bounds, non-positive log bounds or empty choice lists.
  void validate() const;

  Params sample(Rng& rng) const;
  /// Gaussian step of relative size `scale` in the unit cube (log space for
  /// log ranges), clipped to bounds; categoricals switch with probability `scale`.
  Params perturb(const Params& base, double scale, Rng& rng) const;
  /// Centre of every range; first choice for categoricals.
  Params midpoint() const;
  bool contains(const Params& p) const;

  /// Stage-2 domain classifier space: layers 1-4, neurons 32-256, dropout 0-0.5,
  /// learning rate 1e-5-1e-4 (log), lambda_max 0.1-2, lambda_min fraction 0.01-0.2,
  /// ramp k 5-20, L2 1e-7-1e-3 (log), warmup 0-15.
  static SearchSpace classifier_defaults();
  /// Extractor/head: extractor layers 2-4, widths 16-128, activation relu/tanh, beta_max 0.1-2.
  static SearchSpace architecture_defaults();

 private:
  std::vector<Dimension> dims_;
};

enum class TrialStatus { completed, failed };
std::string_view to_string(TrialStatus s);

struct Trial {
  std::size_t index = 0;
  Params params;
  double objective = 0.0;  // validation MSE; meaningful when completed
  TrialStatus status = TrialStatus::failed;
  std::string error;
  std::uint64_t seed = 0;
};

/// Returns the validation loss of one configuration trained with `seed`.
using Objective = std::function<double(const Params&, std::uint64_t seed)>;

/// Proposes the next configuration from the completed history.
using Sampler = std::function<Params(const SearchSpace&, const std::vector<Trial>& history,
                                     std::size_t remaining, Rng& rng)>;

/// Perturbation around the running best with a step that shrinks as the budget runs out.
Sampler local_perturbation_sampler(double initial_scale = 0.25, double final_scale = 0.02);

struct SearchOptions {
  std::size_t budget = 80;
  std::size_t warm_random = 20;
  int workers = 1;
  /// Trials proposed per refinement round. Results do not depend on `workers`.
  std::size_t round_size = 1;
  Sampler sampler;  // defaults to local_perturbation_sampler()
};

struct SearchResult {
  std::vector<Trial> trials;  // by index
  std::size_t best = 0;

  const Trial& best_trial() const { return trials.at(best); }
  /// Running minimum of completed objectives; +inf before the first completion.
  std::vector<double> running_best() const;
};

/// Warm random trials, then refinement rounds. Failed trials are kept in the
/// history; throws Error when every trial failed.
SearchResult run_search(const SearchSpace& space, const Objective& objective, std::uint64_t seed,
                        const SearchOptions& opts = {});

struct StagedSearchOptions {
  SearchOptions architecture{40, 10, 1, 1, {}};
  SearchOptions training{40, 10, 1, 1, {}};
};

struct StagedSearchResult {
  SearchResult architecture;
  SearchResult training;
  Params best_architecture;
  Params best_training;
};

using StagedObjective = std::function<double(const Params& arch, const Params& train, std::uint64_t seed)>;

/// Phase 1 searches the architecture with mid-range training parameters;
/// phase 2 searches training parameters with the phase-1 winner fixed.
StagedSearchResult staged_search(const SearchSpace& arch_space, const SearchSpace& train_space,
                                 const StagedObjective& objective, std::uint64_t seed,
                                 const StagedSearchOptions& opts = {});

Json to_json(const Params& p);
/// Values are read with the kinds declared by `space`.
Params params_from_json(const Json& j, const SearchSpace& space);
Json to_json(const SearchSpace& space);
SearchSpace space_from_json(const Json& j);
Json to_json(const SearchResult& r);

/// Writes searched values into a pipeline config. Unknown names throw ConfigError.
void apply_params(PipelineConfig& cfg, const Params& p, std::size_t input_dim);

/// Target validation MSE of the MC predictive mean of a staged model trained with `seed`.
double staged_validation_mse(const TransferData& data, const PipelineConfig& cfg, std::uint64_t seed);

}  // namespace bdann
