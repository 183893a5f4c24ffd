#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ncl/container.hpp"
#include "ncl/errors.hpp"
#include "ncl/io.hpp"
#include "ncl/mlp.hpp"
#include "ncl/synth.hpp"
#include "ncl/trainer.hpp"
#include "support.hpp"

using namespace ncl;
using ncl::test::scratch_dir;

namespace {

DatasetSpec small_spec(std::uint64_t seed = 7) {
  DatasetSpec s;
  s.num_concepts = 6;
  s.dim = 8;
  s.text_tokens = 3;
  s.image_patches = 5;
  s.triplets = 40;
  s.mismatch_rate = 0.2;
  s.partial_rate = 0.1;
  s.seed = seed;
  return s;
}

// Bit-at-a-time CRC-32, reflected polynomial 0xEDB88320.
std::uint32_t crc32_bitwise(const std::uint8_t* p, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= p[i];
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

void check_bundle(const TokenBundle& b, std::size_t L, std::size_t d) {
  CHECK(b.tokens.rows() == L);
  CHECK(b.tokens.cols() == d);
  CHECK(b.global_index < L);
  double s = 0.0;
  for (double a : b.attention) {
    CHECK(a >= 0.0);
    s += a;
  }
  CHECK(std::abs(s - 1.0) <= 1e-9);
  CHECK_NOTHROW(b.validate());
}

}  // namespace

TEST_CASE("concepts: a single concept is a unit vector") {
  DatasetSpec s;
  s.num_concepts = 1;
  const auto t = make_concepts(s);
  REQUIRE(t.anchors.rows() == 1);
  CHECK(std::abs(norm(t.anchors.row(0)) - 1.0) <= 1e-12);
}

TEST_CASE("concepts: same seed gives the same table") {
  DatasetSpec s;
  s.seed = 99;
  CHECK(make_concepts(s).anchors == make_concepts(s).anchors);
  DatasetSpec other = s;
  other.seed = 100;
  CHECK(make_concepts(s).anchors != make_concepts(other).anchors);
}

TEST_CASE("concepts: default sizes are well separated") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DatasetSpec s;
    s.seed = seed;
    const auto t = make_concepts(s);
    double worst = -1.0;
    for (std::size_t a = 0; a < 16; ++a) {
      CHECK(std::abs(norm(t.anchors.row(a)) - 1.0) <= 1e-12);
      for (std::size_t b = a + 1; b < 16; ++b) worst = std::max(worst, cosine(t.anchors.row(a), t.anchors.row(b)));
    }
    CHECK(worst < 0.95);
    CHECK(worst == t.max_pairwise_cosine);
    CHECK_FALSE(t.crowded);
  }
}

TEST_CASE("concepts: crowding is flagged") {
  DatasetSpec s;
  s.dim = 4;
  s.num_concepts = 200;
  CHECK(make_concepts(s).crowded);
}

TEST_CASE("spec validation") {
  auto bad = [](auto mutate) {
    DatasetSpec s;
    mutate(s);
    return s;
  };
  CHECK_THROWS_AS(bad([](DatasetSpec& s) { s.dim = 3; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](DatasetSpec& s) { s.triplets = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](DatasetSpec& s) { s.mismatch_rate = 0.7; s.partial_rate = 0.4; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](DatasetSpec& s) { s.mismatch_rate = -0.1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](DatasetSpec& s) { s.eval_fraction = 1.0; }).validate(), ConfigError);
  CHECK_NOTHROW(bad([](DatasetSpec& s) { s.mismatch_rate = 0.6; s.partial_rate = 0.4; }).validate());
}

TEST_CASE("triplets: layout and attention") {
  const DatasetSpec s = small_spec();
  const Dataset data = generate_dataset(s);
  REQUIRE(data.samples.size() == s.triplets);
  for (const auto& t : data.samples) {
    check_bundle(t.mod_text, s.text_tokens + 2, s.dim);
    check_bundle(t.ref_image, s.image_patches + 1, s.dim);
    check_bundle(t.tar_image, s.image_patches + 1, s.dim);
    CHECK(t.mod_text.modality == Modality::text);
    CHECK(t.ref_image.modality == Modality::image);
    CHECK(t.mod_text.global_index == s.text_tokens + 1);
    CHECK(t.ref_image.global_index == 0);
    CHECK(t.ref_concept < s.num_concepts);
    CHECK(t.target_concept < s.num_concepts);
    CHECK(t.target_concept != t.ref_concept);
  }
}

TEST_CASE("triplets: distractor patches carry near-zero attention") {
  const DatasetSpec s = small_spec();
  const Dataset data = generate_dataset(s);
  const std::size_t L = s.image_length();
  const auto expected = static_cast<std::size_t>(std::ceil(s.distractor_fraction * double(s.image_patches)));
  for (const auto& t : data.samples) {
    std::size_t low = 0;
    for (std::size_t r = 0; r < L; ++r) {
      if (t.ref_image.attention[r] <= 1.0 / (10.0 * double(L))) ++low;
    }
    CHECK(low == expected);
  }
}

TEST_CASE("triplets: corruption rates at the extremes") {
  DatasetSpec s = small_spec();
  s.mismatch_rate = 0.0;
  s.partial_rate = 0.0;
  for (const auto& t : generate_dataset(s).samples) CHECK(t.truth == Truth::clean);

  s.mismatch_rate = 1.0;
  s.eval_fraction = 0.0;
  for (const auto& t : generate_dataset(s).samples) {
    CHECK(t.truth == Truth::mismatched);
    CHECK(t.image_concept != t.target_concept);
  }
}

TEST_CASE("triplets: empirical corruption rates") {
  DatasetSpec s;
  s.triplets = 1000;
  s.mismatch_rate = 0.2;
  s.partial_rate = 0.1;
  s.eval_fraction = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    s.seed = seed;
    const auto h = truth_histogram(generate_dataset(s), Split::train);
    REQUIRE(h.total() == 1000);
    CHECK(std::abs(double(h.mismatched) / 1000.0 - 0.2) <= 0.03);
    CHECK(std::abs(double(h.partial) / 1000.0 - 0.1) <= 0.03);
  }
}

TEST_CASE("triplets: the held-out split is never corrupted") {
  DatasetSpec s = small_spec();
  s.mismatch_rate = 0.9;
  s.partial_rate = 0.1;
  const Dataset data = generate_dataset(s);
  CHECK(data.indices(Split::eval).size() == s.eval_count());
  for (std::size_t i : data.indices(Split::eval)) CHECK(data.samples[i].truth == Truth::clean);
  const auto h = truth_histogram(data, Split::train);
  CHECK(h.clean == 0);
}

TEST_CASE("triplets: a clean target's cls row lies nearest its concept") {
  DatasetSpec s;
  s.triplets = 2000;
  s.noise_scale = 0.1;
  const Dataset data = generate_dataset(s);
  const auto concepts = make_concepts(s);
  std::size_t total = 0, nearest = 0;
  for (const auto& t : data.samples) {
    if (t.truth != Truth::clean) continue;
    ++total;
    const auto cls = t.tar_image.global_token();
    const double own = cosine(cls, concepts.anchors.row(t.target_concept));
    bool best = true;
    for (std::size_t c = 0; c < s.num_concepts; ++c) {
      if (c != t.target_concept && cosine(cls, concepts.anchors.row(c)) >= own) best = false;
    }
    nearest += best ? 1 : 0;
  }
  REQUIRE(total > 0);
  CHECK(double(nearest) / double(total) >= 0.99);
}

TEST_CASE("generation is deterministic and thread-count independent") {
  const DatasetSpec s = small_spec(3);
  const Dataset a = generate_dataset(s);
  CHECK(a == generate_dataset(s));
  CHECK(a == generate_dataset_serial(s));
  const auto concepts = make_concepts(s);
  CHECK(synth_triplet(concepts, s, 17) == a.samples[17]);
  CHECK_THROWS_AS(synth_triplet(concepts, s, s.triplets), ConfigError);
}

TEST_CASE("bundle validation rejects broken invariants") {
  const Dataset data = generate_dataset(small_spec());
  TokenBundle b = data.samples[0].ref_image;
  b.attention[0] += 0.01;
  CHECK_THROWS_AS(b.validate(), DataError);
  b = data.samples[0].ref_image;
  b.global_index = b.length();
  CHECK_THROWS_AS(b.validate(), DataError);
  b = data.samples[0].ref_image;
  b.attention.pop_back();
  CHECK_THROWS_AS(b.validate(), DataError);
}

TEST_CASE("dataset file: round trip is exact") {
  const auto dir = scratch_dir("synth_roundtrip");
  const Dataset data = generate_dataset(small_spec());
  write_dataset(data, dir / "d.ncld");
  const Dataset back = read_dataset(dir / "d.ncld");
  CHECK(back == data);
  CHECK(back.spec == data.spec);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    CHECK(back.samples[i].tar_image.tokens.values() == data.samples[i].tar_image.tokens.values());
    CHECK(back.samples[i].truth == data.samples[i].truth);
  }
}

TEST_CASE("dataset file: header echoes sizes") {
  const auto dir = scratch_dir("synth_header");
  const DatasetSpec s = small_spec();
  write_dataset(generate_dataset(s), dir / "d.ncld");
  const Container c = read_container(dir / "d.ncld", kDatasetMagic);
  CHECK(c.header.at("N").get<std::size_t>() == s.triplets);
  CHECK(c.header.at("d").get<std::size_t>() == s.dim);
  CHECK(c.header.at("n").get<std::size_t>() == s.text_tokens);
  CHECK(c.header.at("m").get<std::size_t>() == s.image_patches);
  CHECK(c.header.at("payload_doubles").get<std::size_t>() == c.payload.size());
}

TEST_CASE("dataset file: corruption is detected") {
  const auto dir = scratch_dir("synth_corrupt");
  write_dataset(generate_dataset(small_spec()), dir / "d.ncld");
  const auto bytes = read_file(dir / "d.ncld");

  SUBCASE("truncated by one byte") {
    auto cut = bytes;
    cut.pop_back();
    write_file_atomic(dir / "t.ncld", cut);
    CHECK_THROWS_WITH_AS(read_dataset(dir / "t.ncld"), doctest::Contains("truncated"), DataError);
  }
  SUBCASE("truncated at every prefix length class") {
    for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{9}, std::size_t{40}, bytes.size() / 2}) {
      std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
      CHECK_THROWS_AS(decode_container(cut, kDatasetMagic), DataError);
    }
  }
  SUBCASE("flipped payload bit") {
    auto bad = bytes;
    bad[bad.size() - 20] ^= 0x10;
    CHECK_THROWS_WITH_AS(decode_container(bad, kDatasetMagic), doctest::Contains("checksum"), DataError);
  }
  SUBCASE("wrong magic") {
    CHECK_THROWS_WITH_AS(decode_container(bytes, kWeightsMagic), doctest::Contains("magic"), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_dataset(dir / "nope.ncld"), IoError);
  }
}

TEST_CASE("container: checksum matches an independent CRC-32") {
  const std::vector<double> payload{1.5, -2.25, 3e100, 0.0};
  const auto bytes = encode_container("TEST", {{"k", 1}}, payload);
  const std::uint32_t stored = le32(bytes.data() + bytes.size() - 4);
  CHECK(stored == crc32_bitwise(bytes.data() + 6, bytes.size() - 10));
  // Known check value of the algorithm.
  const char* nine = "123456789";
  CHECK(crc32_bitwise(reinterpret_cast<const std::uint8_t*>(nine), 9) == 0xCBF43926u);

  const Container c = decode_container(bytes, "TEST");
  CHECK(c.payload == payload);
  CHECK(c.header.at("k") == 1);
  CHECK(bytes[4] == kContainerVersion);
  CHECK(bytes[5] == 0);
}

TEST_CASE("container: atomic write leaves nothing behind on failure") {
  const auto dir = scratch_dir("synth_atomic");
  const std::vector<std::uint8_t> data{1, 2, 3};
  CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "x.bin", data), IoError);
  CHECK_FALSE(std::filesystem::exists(dir / "missing" / "x.bin"));
  write_file_atomic(dir / "x.bin", data);
  CHECK(read_file(dir / "x.bin") == data);
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("weights file: round trip") {
  const auto dir = scratch_dir("synth_weights");
  const ParamStore p = init_model(8, 5);
  save_weights(p, dir / "w.nclw");
  const ParamStore back = load_weights(dir / "w.nclw");
  CHECK(back == p);
  for (const auto& q : back) CHECK(q.group == p.at(q.name).group);
  CHECK_THROWS_AS(read_dataset(dir / "w.nclw"), DataError);
}

TEST_CASE("run config: defaults, overrides and strictness") {
  RunConfig c = run_config_from_json(nlohmann::json::object());
  CHECK(c.dataset == DatasetSpec{});
  CHECK(c.train == TrainConfig{});

  c = run_config_from_json({{"seed", 11}, {"dim", 16}, {"epochs", 2}, {"filter_scope", "batch"}});
  CHECK(c.dataset.seed == 11);
  CHECK(c.train.seed == 11);
  CHECK(c.dataset.dim == 16);
  CHECK(c.train.epochs == 2);
  CHECK(c.train.filter_scope == FilterScope::batch);

  CHECK(run_config_from_json(to_json(c)) == c);

  CHECK_THROWS_AS(run_config_from_json({{"dimm", 16}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"dim", "16"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"dim", -1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"enable_wcb", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"filter_scope", "sometimes"}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("run config: file loading") {
  const auto dir = scratch_dir("synth_config");
  CHECK_THROWS_AS(load_run_config(dir / "none.json"), IoError);
  {
    std::ofstream(dir / "bad.json") << "{ not json";
  }
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
  {
    std::ofstream(dir / "ok.json") << R"({"triplets": 64, "seed": 4})";
  }
  const RunConfig c = load_run_config(dir / "ok.json");
  CHECK(c.dataset.triplets == 64);
  CHECK(c.train.seed == 4);
}
