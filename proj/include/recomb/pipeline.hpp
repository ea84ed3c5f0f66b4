#pragma once

// Stage orchestration: ingest -> train -> atoms -> measure -> validate -> report.
//
// Each stage has a key hashed from its config section, the keys of the stages
// it reads and the checksums of its external input files. A stage whose key
// matches the manifest and whose outputs still match their recorded checksums
// is skipped. Outputs are staged in a scratch directory and renamed into
// place; the manifest entry is written last.

#include "recomb/atoms.hpp"
#include "recomb/corpus.hpp"
#include "recomb/embedding.hpp"
#include "recomb/panel.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace recomb {

enum class Stage { ingest, train, atoms, measure, validate, report };

inline constexpr std::array<Stage, 6> kStages = {Stage::ingest,  Stage::train,    Stage::atoms,
                                                 Stage::measure, Stage::validate, Stage::report};

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);
/// Stages whose outputs `s` reads.
std::vector<Stage> upstream_of(Stage s);

struct AxisSeeds {
  std::string name;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  /// Words projected onto the axis in the validation report.
  std::vector<std::string> probes;
};

struct PipelineConfig {
  struct Paths {
    std::string corpus;
    std::string companies;
    std::string technical_terms;
    std::string general_freq;
    std::string patent_freq;
    std::string cpi;
    std::string out = "out";
  } paths;

  struct Ingest {
    SliceSpec slices;
    TokenRules rules;
    int min_count = 10;
    WindowSpec window;
    SourceWeights weights;
    double ppmi_shift = 1.0;
  } ingest;

  TrainConfig train;
  AtomConfig atoms;

  struct Measure {
    MeasureConfig config;
    int cpi_base_year = 2015;
    /// Members listed per atom in the atoms TSV summary; -1 lists all.
    int atom_top_m = 20;
  } measure;

  struct Validate {
    std::vector<AxisSeeds> axes;
    std::vector<std::string> drift_words;
    int drift_n = 10;
    std::vector<std::array<std::string, 3>> analogies;
    int analogy_n = 5;
  } validate;

  std::uint64_t seed = 1;
  /// 0 keeps the OpenMP default.
  int threads = 0;

  /// Directory relative paths are resolved against; not serialized.
  std::filesystem::path base_dir = ".";

  std::filesystem::path resolve(const std::string& p) const;

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  static PipelineConfig from_json(const nlohmann::ordered_json& j, std::filesystem::path base_dir = ".");
  static PipelineConfig load(const std::filesystem::path& file);
  nlohmann::ordered_json to_json() const;

  /// Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
  void set(std::string_view assignment);
  /// Config section hashed into the stage key.
  nlohmann::ordered_json section(Stage s) const;
};

/// Hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

struct StageRecord {
  std::string key;
  /// Input label -> {"path", "sha256"}.
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  /// Output path relative to the output dir -> sha256, sorted by path.
  std::map<std::string, std::string> outputs;
  std::vector<std::string> warnings;
  bool passed = true;
};

struct Manifest {
  std::string config_hash;
  std::map<std::string, StageRecord> stages;

  static inline const std::vector<std::string> kIgnored = {"manifest.json", "run_history.jsonl", ".lock"};

  nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::ordered_json& j);
  static Manifest load(const std::filesystem::path& out_dir);
};

enum class StageStatus { ran, up_to_date };

class Pipeline {
 public:
  /// Takes the output-directory lock for the lifetime of the object.
  explicit Pipeline(PipelineConfig cfg);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Runs one stage. Upstream stages must be current, otherwise throws
  /// StaleInputError naming the stale stage. A failed validate stage records
  /// its outputs and throws ValidationFailure.
  StageStatus run(Stage s);
  /// Every stage in order; each is skipped when current.
  void run_all();

  /// Expected key of `s` for the current config and inputs on disk.
  std::string stage_key(Stage s);
  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& out_dir() const { return out_; }

 private:
  struct Outputs;

  bool current(Stage s, std::string* why);
  void commit(Stage s, Outputs& outputs, bool passed);
  void save_manifest();
  void log_history(Stage s, std::string_view status);
  nlohmann::ordered_json external_inputs(Stage s) const;

  void do_ingest(Outputs& o);
  void do_train(Outputs& o);
  void do_atoms(Outputs& o);
  void do_measure(Outputs& o);
  bool do_validate(Outputs& o);
  void do_report(Outputs& o);

  PipelineConfig cfg_;
  std::filesystem::path out_;
  Manifest manifest_;
  std::map<Stage, std::string> key_cache_;
};

/// Loaders for stage artifacts in an output directory.
Vocabulary load_vocab(const std::filesystem::path& out_dir);
EmbeddingTensor load_embeddings(const std::filesystem::path& out_dir);
std::vector<AtomDictionary> load_atoms(const std::filesystem::path& out_dir, const Vocabulary& vocab);
std::vector<MeasureRow> load_panel(const std::filesystem::path& out_dir);

}  // namespace recomb
