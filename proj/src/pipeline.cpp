#include "recomb/pipeline.hpp"

#include "recomb/parallel.hpp"
#include "recomb/report.hpp"
#include "recomb/validation.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace recomb {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::train: return "train";
    case Stage::atoms: return "atoms";
    case Stage::measure: return "measure";
    case Stage::validate: return "validate";
    case Stage::report: return "report";
  }
  return "ingest";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kStages)
    if (to_string(s) == name) return s;
  throw ConfigError(fmt::format("unknown stage '{}'", name));
}

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::ingest: return {};
    case Stage::train: return {Stage::ingest};
    case Stage::atoms: return {Stage::ingest, Stage::train};
    case Stage::measure: return {Stage::ingest, Stage::train, Stage::atoms};
    case Stage::validate: return {Stage::ingest, Stage::train, Stage::atoms, Stage::measure};
    case Stage::report: return {Stage::measure, Stage::validate};
  }
  return {};
}

// ---------------------------------------------------------------- config

namespace {

/// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where()));
  }

  template <class T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(fmt::format("{}.{}: wrong type ({})", where(), key, j_.at(key).dump()));
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", where(), k));
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

LocalAggregation parse_aggregation(const std::string& s) {
  if (s == "pooled") return LocalAggregation::pooled;
  if (s == "region_weighted") return LocalAggregation::region_weighted;
  throw ConfigError(fmt::format("measure.local_aggregation: unknown value '{}'", s));
}

std::string_view to_string(LocalAggregation a) {
  return a == LocalAggregation::pooled ? "pooled" : "region_weighted";
}

template <class F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

fs::path PipelineConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

PipelineConfig PipelineConfig::from_json(const json& j, fs::path base_dir) {
  PipelineConfig c;
  c.base_dir = std::move(base_dir);
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);

  auto paths = root.sub("paths");
  paths.get("corpus", c.paths.corpus);
  paths.get("companies", c.paths.companies);
  paths.get("technical_terms", c.paths.technical_terms);
  paths.get("general_freq", c.paths.general_freq);
  paths.get("patent_freq", c.paths.patent_freq);
  paths.get("cpi", c.paths.cpi);
  paths.get("out", c.paths.out);
  paths.finish();

  auto ing = root.sub("ingest");
  ing.get("year_min", c.ingest.slices.year_min);
  ing.get("year_max", c.ingest.slices.year_max);
  ing.get("years_per_slice", c.ingest.slices.years_per_slice);
  ing.get("min_count", c.ingest.min_count);
  ing.get("window", c.ingest.window.window);
  ing.get("harmonic_decay", c.ingest.window.harmonic_decay);
  ing.get("ppmi_shift", c.ingest.ppmi_shift);
  auto tok = ing.sub("tokens");
  tok.get("lowercase", c.ingest.rules.lowercase);
  tok.get("strip_punctuation", c.ingest.rules.strip_punctuation);
  tok.get("strip_numbers", c.ingest.rules.strip_numbers);
  if (tok.has("stopwords")) {
    const auto& sw = tok.raw("stopwords");
    if (sw.is_string() && sw.get<std::string>() == "default") {
      c.ingest.rules.stopwords = TokenRules::default_stopwords();
    } else if (sw.is_array()) {
      c.ingest.rules.stopwords.clear();
      for (const auto& w : sw) {
        if (!w.is_string()) throw ConfigError("ingest.tokens.stopwords: expected strings");
        c.ingest.rules.stopwords.insert(w.get<std::string>());
      }
    } else {
      throw ConfigError("ingest.tokens.stopwords: expected \"default\" or a list");
    }
  }
  std::vector<std::vector<std::string>> bigrams;
  tok.get("bigrams", bigrams);
  for (const auto& b : bigrams) {
    if (b.size() != 2) throw ConfigError("ingest.tokens.bigrams: each entry needs two words");
    c.ingest.rules.bigrams.emplace_back(b[0], b[1]);
  }
  tok.finish();
  auto sw = ing.sub("source_weights");
  sw.get("news", c.ingest.weights.news);
  sw.get("patent", c.ingest.weights.patent);
  sw.get("other", c.ingest.weights.other);
  sw.finish();
  ing.finish();

  auto tr = root.sub("train");
  tr.get("k", c.train.k);
  tr.get("lambda", c.train.lambda);
  tr.get("tau", c.train.tau);
  tr.get("gamma", c.train.gamma);
  tr.get("sweeps", c.train.sweeps);
  tr.get("tol", c.train.tol);
  tr.finish();

  auto at = root.sub("atoms");
  at.get("atoms", c.atoms.atoms);
  at.get("sparsity", c.atoms.sparsity);
  at.get("iterations", c.atoms.iterations);
  std::string method(to_string(c.atoms.method));
  at.get("method", method);
  at.finish();

  auto me = root.sub("measure");
  auto& mc = c.measure.config;
  me.get("min_module_size", mc.min_module_size);
  std::string agg(to_string(mc.local_aggregation));
  me.get("local_aggregation", agg);
  me.get("freq_ratio_threshold", mc.freq_ratio_threshold);
  me.get("lookback_years", mc.lookback_years);
  me.get("rare_percentile", mc.rare_percentile);
  me.get("high_price_share", mc.high_price_share);
  std::optional<std::string> censor;
  if (me.has("censor_date") && !me.raw("censor_date").is_null()) {
    std::string text;
    me.get("censor_date", text);
    censor = text;
  }
  me.get("cpi_base_year", c.measure.cpi_base_year);
  me.get("atom_top_m", c.measure.atom_top_m);
  me.finish();

  auto va = root.sub("validate");
  if (va.has("axes")) {
    const auto& axes = va.raw("axes");
    if (!axes.is_array()) throw ConfigError("validate.axes: expected a list");
    for (std::size_t i = 0; i < axes.size(); ++i) {
      Section ax(axes[i], fmt::format("validate.axes[{}]", i));
      AxisSeeds a;
      ax.get("name", a.name);
      ax.get("positive", a.positive);
      ax.get("negative", a.negative);
      ax.get("probes", a.probes);
      ax.finish();
      if (a.name.empty()) a.name = fmt::format("axis{}", i);
      c.validate.axes.push_back(std::move(a));
    }
  }
  va.get("drift_words", c.validate.drift_words);
  va.get("drift_n", c.validate.drift_n);
  std::vector<std::vector<std::string>> analogies;
  va.get("analogies", analogies);
  for (const auto& a : analogies) {
    if (a.size() != 3) throw ConfigError("validate.analogies: each entry needs three words");
    c.validate.analogies.push_back({a[0], a[1], a[2]});
  }
  va.get("analogy_n", c.validate.analogy_n);
  va.finish();
  root.finish();

  as_config_error([&] {
    c.atoms.method = parse_atom_method(method);
    mc.local_aggregation = parse_aggregation(agg);
    if (censor) mc.censor_date = Date::parse(*censor);
    c.ingest.slices.validate();
    c.train.validate();
  });
  c.train.seed = c.seed;
  c.atoms.seed = c.seed;
  if (c.ingest.min_count < 1) throw ConfigError("ingest.min_count must be >= 1");
  if (c.ingest.window.window < 1) throw ConfigError("ingest.window must be >= 1");
  if (!(c.ingest.ppmi_shift >= 1.0)) throw ConfigError("ingest.ppmi_shift must be >= 1");
  for (double w : {c.ingest.weights.news, c.ingest.weights.patent, c.ingest.weights.other})
    if (!(w > 0.0)) throw ConfigError("ingest.source_weights must be > 0");
  if (c.atoms.atoms < 1 || c.atoms.sparsity < 1 || c.atoms.sparsity > c.atoms.atoms || c.atoms.iterations < 1)
    throw ConfigError("atoms: need atoms >= 1, 1 <= sparsity <= atoms, iterations >= 1");
  if (mc.min_module_size < 1) throw ConfigError("measure.min_module_size must be >= 1");
  if (mc.lookback_years < 1) throw ConfigError("measure.lookback_years must be >= 1");
  if (!(mc.rare_percentile >= 0.0 && mc.rare_percentile <= 1.0))
    throw ConfigError("measure.rare_percentile must be in [0, 1]");
  if (!(mc.high_price_share > 0.0 && mc.high_price_share <= 1.0))
    throw ConfigError("measure.high_price_share must be in (0, 1]");
  if (!(mc.freq_ratio_threshold > 0.0)) throw ConfigError("measure.freq_ratio_threshold must be > 0");
  if (c.validate.drift_n < 1 || c.validate.analogy_n < 1) throw ConfigError("validate: n values must be >= 1");
  if (c.threads < 0) throw ConfigError("threads must be >= 0");
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", file.string()));
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config '{}': {}", file.string(), e.what()));
  }
  return from_json(j, file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["paths"] = {{"corpus", paths.corpus},         {"companies", paths.companies},
                {"technical_terms", paths.technical_terms}, {"general_freq", paths.general_freq},
                {"patent_freq", paths.patent_freq}, {"cpi", paths.cpi},
                {"out", paths.out}};

  json tokens;
  tokens["lowercase"] = ingest.rules.lowercase;
  tokens["strip_punctuation"] = ingest.rules.strip_punctuation;
  tokens["strip_numbers"] = ingest.rules.strip_numbers;
  if (ingest.rules.stopwords == TokenRules::default_stopwords()) {
    tokens["stopwords"] = "default";
  } else {
    std::vector<std::string> sw(ingest.rules.stopwords.begin(), ingest.rules.stopwords.end());
    std::sort(sw.begin(), sw.end());
    tokens["stopwords"] = sw;
  }
  tokens["bigrams"] = json::array();
  for (const auto& [a, b] : ingest.rules.bigrams) tokens["bigrams"].push_back({a, b});
  j["ingest"] = {{"year_min", ingest.slices.year_min},
                 {"year_max", ingest.slices.year_max},
                 {"years_per_slice", ingest.slices.years_per_slice},
                 {"min_count", ingest.min_count},
                 {"window", ingest.window.window},
                 {"harmonic_decay", ingest.window.harmonic_decay},
                 {"ppmi_shift", ingest.ppmi_shift},
                 {"tokens", tokens},
                 {"source_weights",
                  {{"news", ingest.weights.news}, {"patent", ingest.weights.patent}, {"other", ingest.weights.other}}}};
  j["train"] = {{"k", train.k},         {"lambda", train.lambda}, {"tau", train.tau},
                {"gamma", train.gamma}, {"sweeps", train.sweeps}, {"tol", train.tol}};
  j["atoms"] = {{"atoms", atoms.atoms},
                {"sparsity", atoms.sparsity},
                {"iterations", atoms.iterations},
                {"method", std::string(to_string(atoms.method))}};
  const auto& mc = measure.config;
  j["measure"] = {{"min_module_size", mc.min_module_size},
                  {"local_aggregation", std::string(to_string(mc.local_aggregation))},
                  {"freq_ratio_threshold", mc.freq_ratio_threshold},
                  {"lookback_years", mc.lookback_years},
                  {"rare_percentile", mc.rare_percentile},
                  {"high_price_share", mc.high_price_share},
                  {"censor_date", mc.censor_date ? json(mc.censor_date->to_string()) : json(nullptr)},
                  {"cpi_base_year", measure.cpi_base_year},
                  {"atom_top_m", measure.atom_top_m}};
  json axes = json::array();
  for (const auto& a : validate.axes)
    axes.push_back({{"name", a.name}, {"positive", a.positive}, {"negative", a.negative}, {"probes", a.probes}});
  json analogies = json::array();
  for (const auto& a : validate.analogies) analogies.push_back({a[0], a[1], a[2]});
  j["validate"] = {{"axes", axes},
                   {"drift_words", validate.drift_words},
                   {"drift_n", validate.drift_n},
                   {"analogies", analogies},
                   {"analogy_n", validate.analogy_n}};
  return j;
}

void PipelineConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError(fmt::format("--set expects key=value, got '{}'", assignment));
  const std::string key(assignment.substr(0, eq));
  const std::string value(assignment.substr(eq + 1));
  json j = to_json();
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw ConfigError(fmt::format("--set: unknown key '{}'", key));
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw ConfigError(fmt::format("--set: unknown key '{}'", key));
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  (*node)[parts.back()] = parsed;
  *this = from_json(j, base_dir);
}

json PipelineConfig::section(Stage s) const {
  const json j = to_json();
  switch (s) {
    case Stage::ingest: return j["ingest"];
    case Stage::train: return {{"train", j["train"]}, {"seed", seed}};
    case Stage::atoms: return {{"atoms", j["atoms"]}, {"seed", seed}};
    case Stage::measure: return {{"measure", j["measure"]}, {"tokens", j["ingest"]["tokens"]}};
    case Stage::validate: return j["validate"];
    case Stage::report: return json::object();
  }
  return json::object();
}

// -------------------------------------------------------------- checksums

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", file.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

// --------------------------------------------------------------- manifest

json Manifest::to_json() const {
  json j;
  j["format"] = 1;
  j["versions"] = {{"recomb", "0.1.0"}, {"embedding_format", 1}, {"atoms_format", 1}};
  j["config_hash"] = config_hash;
  json st = json::object();
  for (auto s : kStages) {
    const auto it = stages.find(std::string(to_string(s)));
    if (it == stages.end()) continue;
    const auto& r = it->second;
    json outputs = json::object();
    for (const auto& [path, sha] : r.outputs) outputs[path] = sha;
    st[it->first] = {{"key", r.key},
                     {"passed", r.passed},
                     {"inputs", r.inputs},
                     {"outputs", outputs},
                     {"warnings", r.warnings}};
  }
  j["stages"] = std::move(st);
  j["ignored"] = kIgnored;
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  m.config_hash = j.value("config_hash", std::string{});
  const json stages = j.value("stages", json::object());
  for (const auto& [name, r] : stages.items()) {
    StageRecord rec;
    rec.key = r.value("key", std::string{});
    rec.passed = r.value("passed", true);
    rec.inputs = r.value("inputs", json::object());
    const json outputs = r.value("outputs", json::object());
    for (const auto& [path, sha] : outputs.items()) rec.outputs[path] = sha.get<std::string>();
    rec.warnings = r.value("warnings", std::vector<std::string>{});
    m.stages[name] = std::move(rec);
  }
  return m;
}

Manifest Manifest::load(const fs::path& out_dir) {
  const auto file = out_dir / "manifest.json";
  if (!fs::exists(file)) return {};
  std::ifstream in(file);
  try {
    return from_json(json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("manifest unreadable ({}); all stages will rerun", e.what());
    return {};
  }
}

// ---------------------------------------------------------------- helpers

namespace {

void write_atomic(const fs::path& file, std::string_view content) {
  fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
  }
  fs::rename(tmp, file);
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", file.string()));
  return in;
}

std::string file_safe(const std::string& word) {
  std::string out;
  for (unsigned char c : word) out += std::isalnum(c) || c == '_' || c == '-' ? static_cast<char>(c) : '_';
  return out.empty() ? "_" : out;
}

std::string lock_path(const fs::path& out) { return (out / ".lock").string(); }

bool pid_alive(long pid) { return pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM); }

void acquire_lock(const fs::path& out) {
  const auto path = lock_path(out);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid());
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written < 0) throw Error("cannot write lock file");
      return;
    }
    std::ifstream in(path);
    long holder = 0;
    in >> holder;
    if (pid_alive(holder))
      throw Error(fmt::format("output directory '{}' is locked by process {}", out.string(), holder));
    spdlog::warn("removing stale lock left by process {}", holder);
    fs::remove(path);
  }
  throw Error(fmt::format("cannot lock output directory '{}'", out.string()));
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto days = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{now - days};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count());
}

}  // namespace

struct Pipeline::Outputs {
  std::map<std::string, std::string> files;
  std::vector<std::string> warnings;

  void add(const std::string& rel, std::string content) { files[rel] = std::move(content); }
  template <class F>
  void write(const std::string& rel, F&& f) {
    std::ostringstream out;
    f(out);
    add(rel, out.str());
  }
  void warn(std::string msg) {
    spdlog::warn("{}", msg);
    warnings.push_back(std::move(msg));
  }
};

// --------------------------------------------------------------- loaders

Vocabulary load_vocab(const fs::path& out_dir) {
  auto in = open_in(out_dir / "vocab.tsv");
  return Vocabulary::read_tsv(in);
}

EmbeddingTensor load_embeddings(const fs::path& out_dir) {
  auto in = open_in(out_dir / "embeddings.bin");
  return EmbeddingTensor::read_binary(in);
}

std::vector<AtomDictionary> load_atoms(const fs::path& out_dir, const Vocabulary& vocab) {
  std::vector<AtomDictionary> out;
  for (int year : vocab.slice_labels()) {
    auto in = open_in(out_dir / "atoms" / fmt::format("{}.bin", year));
    out.push_back(AtomDictionary::read_binary(in));
  }
  return out;
}

std::vector<MeasureRow> load_panel(const fs::path& out_dir) {
  auto in = open_in(out_dir / "panel.csv");
  return read_panel_csv(in);
}

// --------------------------------------------------------------- pipeline

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.resolve(cfg_.paths.out)) {
  fs::create_directories(out_);
  acquire_lock(out_);
  if (cfg_.threads > 0) set_threads(cfg_.threads);
  for (const auto& entry : fs::directory_iterator(out_))
    if (entry.path().filename().string().starts_with(".partial-")) {
      spdlog::info("removing partial output {}", entry.path().filename().string());
      fs::remove_all(entry.path());
    }
  manifest_ = Manifest::load(out_);
}

Pipeline::~Pipeline() {
  std::error_code ec;
  fs::remove(lock_path(out_), ec);
}

json Pipeline::external_inputs(Stage s) const {
  std::vector<std::pair<const char*, const std::string*>> files;
  if (s == Stage::ingest) files = {{"corpus", &cfg_.paths.corpus}};
  if (s == Stage::measure)
    files = {{"companies", &cfg_.paths.companies},
             {"technical_terms", &cfg_.paths.technical_terms},
             {"general_freq", &cfg_.paths.general_freq},
             {"patent_freq", &cfg_.paths.patent_freq},
             {"cpi", &cfg_.paths.cpi}};
  json j = json::object();
  for (const auto& [label, path] : files) {
    if (path->empty()) {
      if (std::string_view(label) == "corpus" || std::string_view(label) == "companies")
        throw ConfigError(fmt::format("paths.{} is required", label));
      continue;
    }
    const auto full = cfg_.resolve(*path);
    if (!fs::is_regular_file(full))
      throw ConfigError(fmt::format("paths.{}: '{}' does not exist", label, full.string()));
    j[label] = {{"path", *path}, {"sha256", sha256_file(full)}};
  }
  return j;
}

std::string Pipeline::stage_key(Stage s) {
  if (const auto it = key_cache_.find(s); it != key_cache_.end()) return it->second;
  json up = json::object();
  for (auto u : upstream_of(s)) up[std::string(to_string(u))] = stage_key(u);
  const json basis = {{"stage", to_string(s)},
                      {"config", cfg_.section(s)},
                      {"upstream", up},
                      {"inputs", external_inputs(s)}};
  return key_cache_[s] = sha256_hex(basis.dump());
}

bool Pipeline::current(Stage s, std::string* why) {
  auto say = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  const auto it = manifest_.stages.find(std::string(to_string(s)));
  if (it == manifest_.stages.end()) return say("it has not run");
  const auto& rec = it->second;
  if (rec.key != stage_key(s)) return say("its config, inputs or upstream stages changed");
  if (!rec.passed) return say("its last run failed validation");
  for (const auto& [rel, sha] : rec.outputs) {
    const auto file = out_ / rel;
    if (!fs::is_regular_file(file)) return say(fmt::format("output '{}' is missing", rel));
    if (sha256_file(file) != sha) return say(fmt::format("output '{}' does not match its recorded checksum", rel));
  }
  return true;
}

void Pipeline::save_manifest() {
  json cfg = cfg_.to_json();
  cfg["paths"].erase("out");
  cfg.erase("threads");
  manifest_.config_hash = sha256_hex(cfg.dump());
  write_atomic(out_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
}

void Pipeline::log_history(Stage s, std::string_view status) {
  std::ofstream out(out_ / "run_history.jsonl", std::ios::app);
  out << json{{"time", utc_now()}, {"stage", to_string(s)}, {"status", status}, {"key", stage_key(s)}}.dump()
      << "\n";
}

void Pipeline::commit(Stage s, Outputs& outputs, bool passed) {
  const std::string name(to_string(s));
  std::map<std::string, std::string> old;
  if (const auto it = manifest_.stages.find(name); it != manifest_.stages.end()) old = it->second.outputs;
  manifest_.stages.erase(name);
  save_manifest();

  const fs::path scratch = out_ / (".partial-" + name);
  fs::remove_all(scratch);
  try {
    for (const auto& [rel, content] : outputs.files) write_atomic(scratch / rel, content);
    for (const auto& [rel, sha] : old)
      if (!outputs.files.contains(rel)) fs::remove(out_ / rel);
    for (const auto& [rel, content] : outputs.files) {
      fs::create_directories((out_ / rel).parent_path());
      fs::rename(scratch / rel, out_ / rel);
    }
    fs::remove_all(scratch);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(scratch, ec);
    throw;
  }

  StageRecord rec;
  rec.key = stage_key(s);
  rec.inputs = external_inputs(s);
  for (const auto& [rel, content] : outputs.files) rec.outputs[rel] = sha256_hex(content);
  rec.warnings = outputs.warnings;
  rec.passed = passed;
  manifest_.stages[name] = std::move(rec);
  save_manifest();
  log_history(s, passed ? "ran" : "failed");
}

StageStatus Pipeline::run(Stage s) {
  for (auto u : upstream_of(s)) {
    std::string why;
    if (!current(u, &why))
      throw StaleInputError(fmt::format("stage '{}' needs '{}', which is stale: {}. Run `{}` or `run-all` first.",
                                        to_string(s), to_string(u), why, to_string(u)));
  }
  if (current(s, nullptr)) {
    spdlog::info("{}: up to date", to_string(s));
    return StageStatus::up_to_date;
  }
  spdlog::info("{}: running", to_string(s));
  Outputs o;
  bool passed = true;
  switch (s) {
    case Stage::ingest: do_ingest(o); break;
    case Stage::train: do_train(o); break;
    case Stage::atoms: do_atoms(o); break;
    case Stage::measure: do_measure(o); break;
    case Stage::validate: passed = do_validate(o); break;
    case Stage::report: do_report(o); break;
  }
  commit(s, o, passed);
  if (!passed) throw ValidationFailure("validation checks failed; see validation.json");
  spdlog::info("{}: wrote {} files", to_string(s), o.files.size());
  return StageStatus::ran;
}

void Pipeline::run_all() {
  for (auto s : kStages) run(s);
}

// ----------------------------------------------------------------- stages

void Pipeline::do_ingest(Outputs& o) {
  auto in = open_in(cfg_.resolve(cfg_.paths.corpus));
  const auto docs = read_documents(in);
  const auto corpus = tokenize_corpus(docs, cfg_.ingest.rules, cfg_.ingest.slices);
  if (corpus.skipped_out_of_range)
    o.warn(fmt::format("{} documents outside the slice range were skipped", corpus.skipped_out_of_range));
  if (corpus.skipped_empty) o.warn(fmt::format("{} documents had no tokens", corpus.skipped_empty));
  const auto vocab = build_vocab(corpus, cfg_.ingest.min_count);
  const auto counts = count_cooccurrence(corpus, vocab, cfg_.ingest.window, cfg_.ingest.weights);

  json stats = {{"documents", docs.size()},
                {"used_documents", corpus.docs.size()},
                {"skipped_out_of_range", corpus.skipped_out_of_range},
                {"skipped_empty", corpus.skipped_empty},
                {"vocab_size", vocab.size()},
                {"slices", json::array()}};
  for (const auto& c : counts) {
    const auto ppmi = build_ppmi(c, cfg_.ingest.ppmi_shift);
    const int year = vocab.slice_labels().at(static_cast<std::size_t>(c.slice));
    if (ppmi.values.nnz() == 0) o.warn(fmt::format("slice {} has an empty PPMI matrix", year));
    o.write(fmt::format("ppmi/{}.txt", year), [&](std::ostream& out) { write_ppmi(out, ppmi); });
    stats["slices"].push_back({{"year", year},
                               {"tokens", vocab.slice_total(c.slice)},
                               {"cooccurrence_mass", c.total},
                               {"ppmi_nnz", ppmi.values.nnz()}});
  }
  o.write("vocab.tsv", [&](std::ostream& out) { vocab.write_tsv(out); });
  o.add("ingest_stats.json", stats.dump(2) + "\n");
}

void Pipeline::do_train(Outputs& o) {
  const auto vocab = load_vocab(out_);
  std::vector<PpmiMatrix> y;
  for (int year : vocab.slice_labels()) {
    auto in = open_in(out_ / "ppmi" / fmt::format("{}.txt", year));
    y.push_back(read_ppmi(in));
  }
  TrainResult r;
  try {
    r = train(y, cfg_.train, vocab.slice_labels());
  } catch (const DivergenceError& e) {
    throw Error(fmt::format("training diverged at sweep {}: {}", e.sweep(), e.what()));
  }
  if (!r.converged) o.warn(fmt::format("training stopped after {} sweeps without converging", r.sweeps_run));
  o.write("embeddings.bin", [&](std::ostream& out) { r.embeddings.write_binary(out); });
  o.write("embeddings.tsv", [&](std::ostream& out) { r.embeddings.write_tsv(out, vocab.words()); });
  const json trace = {{"sweeps_run", r.sweeps_run},
                      {"converged", r.converged},
                      {"objective", objective_value(y, r.embeddings, cfg_.train)},
                      {"splitting_trace", r.trace}};
  o.add("train_trace.json", trace.dump(2) + "\n");
}

void Pipeline::do_atoms(Outputs& o) {
  const auto vocab = load_vocab(out_);
  const auto emb = load_embeddings(out_);
  json summary = json::array();
  for (int t = 0; t < emb.slices(); ++t) {
    AtomConfig ac = cfg_.atoms;
    ac.seed = cfg_.seed + static_cast<std::uint64_t>(t);
    auto dict = train_atoms(emb.slice(t), ac);
    dict.slice = t;
    dict.year = emb.years().at(static_cast<std::size_t>(t));
    const auto unassigned = dict.unassigned();
    if (!unassigned.empty())
      o.warn(fmt::format("slice {}: {} words have zero vectors and no atom", dict.year, unassigned.size()));
    o.write(fmt::format("atoms/{}.bin", dict.year), [&](std::ostream& out) { dict.write_binary(out); });
    o.write(fmt::format("atoms/{}.tsv", dict.year),
            [&](std::ostream& out) { write_atoms_tsv(out, dict, vocab.words()); });
    json atoms = json::array();
    const auto members = atom_summary(dict, cfg_.measure.atom_top_m);
    for (std::size_t a = 0; a < members.size(); ++a) {
      json words = json::array();
      for (const auto& m : members[a]) words.push_back(vocab.word(m.word));
      atoms.push_back({{"atom", a}, {"words", words}});
    }
    summary.push_back({{"year", dict.year},
                       {"atoms", dict.size()},
                       {"unassigned", unassigned.size()},
                       {"trace", dict.trace},
                       {"members", atoms}});
  }
  o.add("atoms_summary.json", summary.dump(2) + "\n");
}

void Pipeline::do_measure(Outputs& o) {
  const auto vocab = load_vocab(out_);
  const auto emb = load_embeddings(out_);
  const auto atoms = load_atoms(out_, vocab);

  auto cin = open_in(cfg_.resolve(cfg_.paths.companies));
  const auto companies = read_companies(cin);

  LexiconSet lex;
  if (!cfg_.paths.technical_terms.empty()) {
    auto in = open_in(cfg_.resolve(cfg_.paths.technical_terms));
    lex.add_terms(in);
  }
  if (!cfg_.paths.general_freq.empty()) {
    auto in = open_in(cfg_.resolve(cfg_.paths.general_freq));
    lex.general_freq = LexiconSet::read_frequencies(in, lex.general_total);
  }
  if (!cfg_.paths.patent_freq.empty()) {
    auto in = open_in(cfg_.resolve(cfg_.paths.patent_freq));
    lex.patent_freq = LexiconSet::read_frequencies(in, lex.patent_total);
  }
  CpiTable cpi({{cfg_.measure.cpi_base_year, 1.0}}, cfg_.measure.cpi_base_year);
  if (!cfg_.paths.cpi.empty()) {
    auto in = open_in(cfg_.resolve(cfg_.paths.cpi));
    as_config_error([&] { cpi = CpiTable::read_csv(in, cfg_.measure.cpi_base_year); });
  }

  const OutcomeCoder coder(companies, cpi, cfg_.measure.config.high_price_share);
  const PanelContext ctx{vocab, emb, atoms, lex, coder, cfg_.ingest.rules, cfg_.measure.config};
  const auto panel = build_panel(companies, ctx);

  for (const auto& r : panel.rejected) o.warn(fmt::format("company '{}' rejected: {}", r.id, r.reason));
  if (panel.dropped_events) o.warn(fmt::format("{} events after a terminal event were dropped", panel.dropped_events));

  o.write("panel.csv", [&](std::ostream& out) { write_panel_csv(out, panel.rows); });
  o.add("panel_schema.json", panel_schema_json());
  o.write("rejected.tsv", [&](std::ostream& out) {
    out << "company_id\treason\n";
    for (const auto& r : panel.rejected) out << r.id << "\t" << r.reason << "\n";
  });
  const json stats = {{"companies", companies.size()},
                      {"rows", panel.rows.size()},
                      {"rejected", panel.rejected.size()},
                      {"dropped_events", panel.dropped_events}};
  o.add("measure_stats.json", stats.dump(2) + "\n");
}

bool Pipeline::do_validate(Outputs& o) {
  const auto vocab = load_vocab(out_);
  const auto emb = load_embeddings(out_);
  const auto atoms = load_atoms(out_, vocab);
  const auto rows = load_panel(out_);

  json checks = json::array();
  bool passed = true;
  auto check = [&](const char* name, bool ok, std::string detail) {
    if (!ok) {
      passed = false;
      spdlog::error("check '{}' failed: {}", name, detail);
    }
    checks.push_back({{"name", name}, {"passed", ok}, {"detail", std::move(detail)}});
  };

  check("embeddings_finite", emb.all_finite(), "");
  check("shapes", emb.words() == vocab.size() && emb.slices() == vocab.n_slices() && atoms.size() == static_cast<std::size_t>(emb.slices()),
        fmt::format("vocab {} x {} slices, embeddings {} x {} slices", vocab.size(), vocab.n_slices(), emb.words(),
                    emb.slices()));
  std::size_t bad_norm = 0, bad_assign = 0;
  for (std::size_t t = 0; t < atoms.size() && t < static_cast<std::size_t>(emb.slices()); ++t) {
    const auto& d = atoms[t];
    for (Eigen::Index a = 0; a < d.atoms.rows(); ++a)
      if (std::abs(d.atoms.row(a).norm() - 1.0) > 1e-8) ++bad_norm;
    const auto fresh = assign_words(d.atoms, emb.slice(static_cast<int>(t)));
    for (std::size_t w = 0; w < fresh.atom.size(); ++w)
      if (w >= d.assignment.atom.size() || fresh.atom[w] != d.assignment.atom[w]) ++bad_assign;
  }
  check("atoms_unit_norm", bad_norm == 0, fmt::format("{} atoms off unit norm", bad_norm));
  check("assignment_is_argmax", bad_assign == 0, fmt::format("{} words differ from the argmax assignment", bad_assign));

  std::size_t out_of_range = 0;
  for (const auto& r : rows) {
    auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo - 1e-12 && v <= hi + 1e-12; };
    const bool ok = in(r.local_distance, 0, 2) && in(r.global_distance, 0, 2) && in(r.tech_app_local_distance, 0, 2) &&
                    in(r.centroid_spread, 0, 2) && in(r.negentropy, -1, 0) && in(r.element_familiarity, 0, 1e300) &&
                    (!r.vc_diversity || in(*r.vc_diversity, 0, 1)) &&
                    (!r.time_to_market_months || in(*r.time_to_market_months, 0, 1e300)) && !(r.end < r.start);
    if (!ok) ++out_of_range;
  }
  check("panel_ranges", out_of_range == 0, fmt::format("{} rows with values out of range", out_of_range));

  json axes = json::array();
  std::string axes_tsv = "axis\tyear\tword\tprojection\n";
  std::size_t bad_axes = 0;
  for (const auto& seeds : cfg_.validate.axes) {
    for (int t = 0; t < emb.slices(); ++t) {
      const int year = emb.years().at(static_cast<std::size_t>(t));
      SemanticAxis axis;
      try {
        axis = build_axis(emb, vocab, t, seeds.name, seeds.positive, seeds.negative);
      } catch (const Error& e) {
        o.warn(fmt::format("{} (slice {})", e.what(), year));
        continue;
      }
      if (std::abs(axis.vector.norm() - 1.0) > 1e-10) ++bad_axes;
      if (t == 0)
        for (const auto& w : axis.dropped) o.warn(fmt::format("axis '{}': seed '{}' not in vocabulary", seeds.name, w));
      json proj = json::object();
      std::vector<std::string> words = axis.positive;
      words.insert(words.end(), axis.negative.begin(), axis.negative.end());
      words.insert(words.end(), seeds.probes.begin(), seeds.probes.end());
      for (const auto& w : words) {
        const auto p = project_word(emb, vocab, w, axis);
        proj[w] = p ? json(std::round(*p * 1e6) / 1e6) : json(nullptr);
        axes_tsv += fmt::format("{}\t{}\t{}\t{}\n", seeds.name, year, w, p ? fmt::format("{:.6f}", *p) : "NA");
      }
      axes.push_back({{"name", seeds.name}, {"year", year}, {"dropped", axis.dropped}, {"projections", proj}});
    }
  }
  check("axes_unit_norm", bad_axes == 0, fmt::format("{} axes off unit norm", bad_axes));

  json drift = json::array();
  std::vector<DriftReport> reports;
  for (const auto& w : cfg_.validate.drift_words) {
    try {
      reports.push_back(drift_trace(emb, vocab, w, cfg_.validate.drift_n));
    } catch (const Error& e) {
      o.warn(fmt::format("drift: {}", e.what()));
      continue;
    }
    const auto& r = reports.back();
    o.write(fmt::format("drift/{}.tsv", file_safe(w)), [&](std::ostream& out) { write_drift_tsv(out, r, vocab); });
    std::ostringstream js;
    write_drift_json(js, r, vocab);
    o.add(fmt::format("drift/{}.json", file_safe(w)), js.str());
    drift.push_back(json::parse(js.str()));
  }
  o.write("drift.csv", [&](std::ostream& out) { write_drift_csv(out, reports, vocab); });

  std::string analogy_tsv = "year\ta\tb\tc\trank\tword\tsimilarity\n";
  json analogies = json::array();
  for (const auto& [a, b, c] : cfg_.validate.analogies) {
    for (int t = 0; t < emb.slices(); ++t) {
      const int year = emb.years().at(static_cast<std::size_t>(t));
      std::vector<Neighbor> res;
      try {
        res = analogy_query(emb, vocab, t, a, b, c, cfg_.validate.analogy_n);
      } catch (const Error& e) {
        o.warn(fmt::format("analogy {} - {} + {} (slice {}): {}", a, b, c, year, e.what()));
        break;
      }
      json top = json::array();
      for (std::size_t i = 0; i < res.size(); ++i) {
        analogy_tsv += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{:.6f}\n", year, a, b, c, i + 1, vocab.word(res[i].id),
                                   res[i].similarity);
        top.push_back(vocab.word(res[i].id));
      }
      analogies.push_back({{"year", year}, {"query", {a, b, c}}, {"top", top}});
    }
  }

  o.add("axes.tsv", axes_tsv);
  o.add("analogies.tsv", analogy_tsv);
  const json summary = {{"passed", passed}, {"checks", checks}, {"axes", axes}, {"drift", drift}, {"analogies", analogies}};
  o.add("validation.json", summary.dump(2) + "\n");
  return passed;
}

void Pipeline::do_report(Outputs& o) {
  const auto rows = load_panel(out_);
  auto vin = open_in(out_ / "validation.json");
  const auto validation = json::parse(vin);
  auto min = open_in(out_ / "measure_stats.json");
  const auto stats = json::parse(min);
  auto report = build_report(rows, stats.value("rejected", std::size_t{0}), validation);
  report["warnings"] = json::object();
  for (auto s : kStages) {
    const auto it = manifest_.stages.find(std::string(to_string(s)));
    if (it != manifest_.stages.end() && !it->second.warnings.empty()) report["warnings"][it->first] = it->second.warnings;
  }
  o.add("report.json", report.dump(2) + "\n");
  o.add("report.txt", report_tables(report));
}

}  // namespace recomb
