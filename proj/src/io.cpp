#include "ncl/io.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ncl/container.hpp"
#include "ncl/errors.hpp"

namespace ncl {

using nlohmann::json;

namespace {

// Reads one typed field from a flat JSON object, rejecting wrong types.
class FieldReader {
 public:
  explicit FieldReader(const json& j) : j_(j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  }

  void size(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      out = non_negative(key, *v);
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      out = non_negative(key, *v);
    }
  }
  void real(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(std::string("config: '") + key + "' must be true or false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
      out = v->get<std::string>();
    }
  }

  static std::uint64_t non_negative(const char* key, const json& v) {
    // Parsed text yields unsigned numbers; values built in code may be signed.
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(std::string("config: '") + key + "' must be a non-negative integer");
  }

  /// Throws for keys nobody asked about.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_[key] = true;
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::map<std::string, bool> seen_;
};

void read_spec_fields(FieldReader& r, DatasetSpec& s) {
  r.size("num_concepts", s.num_concepts);
  r.size("dim", s.dim);
  r.size("text_tokens", s.text_tokens);
  r.size("image_patches", s.image_patches);
  r.size("triplets", s.triplets);
  r.real("mismatch_rate", s.mismatch_rate);
  r.real("partial_rate", s.partial_rate);
  r.real("distractor_fraction", s.distractor_fraction);
  r.real("noise_scale", s.noise_scale);
  r.u64("seed", s.seed);
  r.real("eval_fraction", s.eval_fraction);
  r.real("instance_scale", s.instance_scale);
  r.real("distractor_scale", s.distractor_scale);
  r.real("global_noise_scale", s.global_noise_scale);
}

void read_train_fields(FieldReader& r, TrainConfig& c) {
  r.size("batch_size", c.batch_size);
  r.size("epochs", c.epochs);
  r.real("lr_wcb", c.lr_wcb);
  r.real("lr_other", c.lr_other);
  r.real("tau", c.tau);
  r.real("theta", c.theta);
  std::string scope(to_string(c.filter_scope));
  r.string("filter_scope", scope);
  try {
    c.filter_scope = parse_filter_scope(scope);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  r.size("warmup_epochs", c.warmup_epochs);
  r.u64("seed", c.seed);
  r.real("adam_beta1", c.adam_beta1);
  r.real("adam_beta2", c.adam_beta2);
  r.real("adam_eps", c.adam_eps);
  r.size("em_max_iters", c.em_max_iters);
  r.real("em_tol", c.em_tol);
  r.boolean("enable_wcb", c.enable_wcb);
  r.boolean("enable_nfb", c.enable_nfb);
}

json bundle_meta(const TokenBundle& b) { return b.global_index; }

void append_bundle(std::vector<double>& payload, const TokenBundle& b) {
  const auto v = b.tokens.values();
  payload.insert(payload.end(), v.begin(), v.end());
  payload.insert(payload.end(), b.attention.begin(), b.attention.end());
}

template <typename T>
T header_get(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("dataset header: missing '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("dataset header: bad value for '") + key + "'");
  }
}

TokenBundle read_bundle(std::span<const double> payload, std::size_t& cursor, std::size_t L, std::size_t d,
                        std::size_t global, Modality modality) {
  if (cursor + L * d + L > payload.size()) throw DataError("dataset payload shorter than header describes");
  TokenBundle b;
  b.tokens = Matrix(L, d, std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                                              payload.begin() + static_cast<std::ptrdiff_t>(cursor + L * d)));
  cursor += L * d;
  b.attention.assign(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                     payload.begin() + static_cast<std::ptrdiff_t>(cursor + L));
  cursor += L;
  b.global_index = global;
  b.modality = modality;
  b.validate();
  return b;
}

}  // namespace

json to_json(const DatasetSpec& s) {
  return {{"num_concepts", s.num_concepts},
          {"dim", s.dim},
          {"text_tokens", s.text_tokens},
          {"image_patches", s.image_patches},
          {"triplets", s.triplets},
          {"mismatch_rate", s.mismatch_rate},
          {"partial_rate", s.partial_rate},
          {"distractor_fraction", s.distractor_fraction},
          {"noise_scale", s.noise_scale},
          {"seed", s.seed},
          {"eval_fraction", s.eval_fraction},
          {"instance_scale", s.instance_scale},
          {"distractor_scale", s.distractor_scale},
          {"global_noise_scale", s.global_noise_scale}};
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr_wcb", c.lr_wcb},
          {"lr_other", c.lr_other},
          {"tau", c.tau},
          {"theta", c.theta},
          {"filter_scope", std::string(to_string(c.filter_scope))},
          {"warmup_epochs", c.warmup_epochs},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"em_max_iters", c.em_max_iters},
          {"em_tol", c.em_tol},
          {"enable_wcb", c.enable_wcb},
          {"enable_nfb", c.enable_nfb}};
}

json to_json(const RunConfig& c) {
  json j = to_json(c.dataset);
  j.update(to_json(c.train));
  j["seed"] = c.train.seed;
  j["dataset_path"] = c.dataset_path;
  j["out_dir"] = c.out_dir;
  return j;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  FieldReader r(j);
  DatasetSpec s;
  read_spec_fields(r, s);
  r.finish();
  s.validate();
  return s;
}

RunConfig run_config_from_json(const json& j) {
  FieldReader r(j);
  RunConfig c;
  read_spec_fields(r, c.dataset);
  read_train_fields(r, c.train);
  r.string("dataset_path", c.dataset_path);
  r.string("out_dir", c.out_dir);
  r.finish();
  c.dataset.validate();
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  const DatasetSpec& s = data.spec;
  json samples = json::array();
  std::vector<double> payload;
  for (const auto& t : data.samples) {
    samples.push_back({{"truth", std::string(to_string(t.truth))},
                       {"split", std::string(to_string(t.split))},
                       {"ref_concept", t.ref_concept},
                       {"target_concept", t.target_concept},
                       {"image_concept", t.image_concept},
                       {"blend_concept", t.blend_concept},
                       {"global_index", {bundle_meta(t.mod_text), bundle_meta(t.ref_image), bundle_meta(t.tar_image)}},
                       {"offset", payload.size()}});
    append_bundle(payload, t.mod_text);
    append_bundle(payload, t.ref_image);
    append_bundle(payload, t.tar_image);
  }
  json header = {{"spec", to_json(s)},
                 {"N", data.samples.size()},
                 {"d", s.dim},
                 {"n", s.text_tokens},
                 {"m", s.image_patches},
                 {"samples", std::move(samples)}};
  write_container(path, kDatasetMagic, std::move(header), payload);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const Container c = read_container(path, kDatasetMagic);
  const json& h = c.header;
  Dataset data;
  try {
    data.spec = dataset_spec_from_json(header_get<json>(h, "spec"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset header: ") + e.what());
  }
  const auto N = header_get<std::size_t>(h, "N");
  const auto d = header_get<std::size_t>(h, "d");
  const auto n = header_get<std::size_t>(h, "n");
  const auto m = header_get<std::size_t>(h, "m");
  const DatasetSpec& s = data.spec;
  if (N != s.triplets || d != s.dim || n != s.text_tokens || m != s.image_patches) {
    throw DataError("dataset header: shape fields disagree with the embedded spec");
  }
  const auto samples = header_get<json>(h, "samples");
  if (!samples.is_array() || samples.size() != N) throw DataError("dataset header: sample table length differs from N");

  std::size_t cursor = 0;
  data.samples.reserve(N);
  for (const auto& meta : samples) {
    TripletSample t;
    t.truth = parse_truth(header_get<std::string>(meta, "truth"));
    t.split = parse_split(header_get<std::string>(meta, "split"));
    t.ref_concept = header_get<std::size_t>(meta, "ref_concept");
    t.target_concept = header_get<std::size_t>(meta, "target_concept");
    t.image_concept = header_get<std::size_t>(meta, "image_concept");
    t.blend_concept = header_get<std::size_t>(meta, "blend_concept");
    const std::size_t C = s.num_concepts;
    if (t.ref_concept >= C || t.target_concept >= C || t.image_concept >= C || t.blend_concept >= C) {
      throw DataError("dataset header: concept id out of range");
    }
    const auto globals = header_get<std::vector<std::size_t>>(meta, "global_index");
    if (globals.size() != 3) throw DataError("dataset header: global_index needs three entries");
    if (header_get<std::size_t>(meta, "offset") != cursor) throw DataError("dataset header: offset mismatch");
    t.mod_text = read_bundle(c.payload, cursor, s.text_length(), d, globals[0], Modality::text);
    t.ref_image = read_bundle(c.payload, cursor, s.image_length(), d, globals[1], Modality::image);
    t.tar_image = read_bundle(c.payload, cursor, s.image_length(), d, globals[2], Modality::image);
    data.samples.push_back(std::move(t));
  }
  if (cursor != c.payload.size()) throw DataError("dataset payload longer than header describes");
  return data;
}

void save_weights(const ParamStore& params, const std::filesystem::path& path) {
  json entries = json::array();
  std::vector<double> payload;
  for (const auto& p : params) {
    entries.push_back({{"name", p.name},
                       {"group", std::string(to_string(p.group))},
                       {"rows", p.value.rows()},
                       {"cols", p.value.cols()},
                       {"offset", payload.size()}});
    const auto v = p.value.values();
    payload.insert(payload.end(), v.begin(), v.end());
  }
  write_container(path, kWeightsMagic, {{"params", std::move(entries)}}, payload);
}

ParamStore load_weights(const std::filesystem::path& path) {
  const Container c = read_container(path, kWeightsMagic);
  const auto entries = header_get<json>(c.header, "params");
  if (!entries.is_array()) throw DataError("weights header: 'params' must be an array");
  ParamStore store;
  std::size_t cursor = 0;
  for (const auto& e : entries) {
    const auto rows = header_get<std::size_t>(e, "rows");
    const auto cols = header_get<std::size_t>(e, "cols");
    if (header_get<std::size_t>(e, "offset") != cursor) throw DataError("weights header: offset mismatch");
    if (cols != 0 && rows > (c.payload.size() - cursor) / cols) throw DataError("weights payload too short");
    std::vector<double> v(c.payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                          c.payload.begin() + static_cast<std::ptrdiff_t>(cursor + rows * cols));
    cursor += rows * cols;
    try {
      store.add(header_get<std::string>(e, "name"), parse_param_group(header_get<std::string>(e, "group")),
                Matrix(rows, cols, std::move(v)));
    } catch (const ConfigError& err) {
      throw DataError(std::string("weights header: ") + err.what());
    }
  }
  if (cursor != c.payload.size()) throw DataError("weights payload longer than header describes");
  return store;
}

}  // namespace ncl
