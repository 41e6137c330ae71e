#include <catch2/catch_amalgamated.hpp>

#include <oamao/config.hpp>
#include <oamao/serialize.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

using namespace oamao;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path d = fs::temp_directory_path() / "oamao_serialize_test";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

constexpr const char* kDimless = R"({
  "geometry": {"R_over_w": 9.2088, "w_over_r0": 0.2165, "z_over_zR": 0.4234},
  "correction": {"J": 10}
})";

}  // namespace

TEST_CASE("fnv1a64 reproduces the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a64("hello\n") == 0xa9bc80cca21f28b3ull);
  // byte-order sensitivity
  CHECK(fnv1a64("ab") != fnv1a64("ba"));
}

TEST_CASE("hex64 zero-pads to sixteen hex digits") {
  CHECK(hex64(0) == "0x0000000000000000");
  CHECK(hex64(0xdeadbeefull) == "0x00000000deadbeef");
  CHECK(hex64(0xcbf29ce484222325ull) == "0xcbf29ce484222325");
}

TEST_CASE("format_sig prints six significant digits") {
  CHECK(format_sig(0.5) == "0.5");
  CHECK(format_sig(100.0) == "100");
  CHECK(format_sig(1234567.0) == "1.23457e+06");
  CHECK(format_sig(3.14159265358979) == "3.14159");
  CHECK(format_sig(1e-5) == "1e-05");
  CHECK(format_sig(-0.000123456789) == "-0.000123457");
  CHECK(format_sig(0.9431689563014424) == "0.943169");
}

TEST_CASE("csv_join builds one newline-terminated row") {
  CHECK(csv_join({"a", "b", "c"}) == "a,b,c\n");
  CHECK(csv_join({"x"}) == "x\n");
  CHECK(csv_join({}) == "\n");
}

TEST_CASE("atomic_write_file replaces content and leaves no temp file") {
  fs::path p = temp_dir() / "atomic.txt";
  atomic_write_file(p, "first\n");
  CHECK(slurp(p) == "first\n");
  atomic_write_file(p, "second\n");
  CHECK(slurp(p) == "second\n");
  fs::path tmp = p;
  tmp += ".tmp";
  CHECK(!fs::exists(tmp));
}

TEST_CASE("binary container round-trips a complex matrix bitwise") {
  std::mt19937_64 rng(20240817);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd m(7, 5);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = std::complex<double>(nd(rng), nd(rng));

  nlohmann::json meta = {{"J", 10}, {"case", "roundtrip"}};
  fs::path p = temp_dir() / "mat.oamao";
  write_matrix(p, m, "channel", meta);

  LoadedMatrix lm = read_matrix(p);
  CHECK(lm.header.at("format") == "oamao-matrix");
  CHECK(lm.header.at("format_version") == "1.0.0");
  CHECK(lm.header.at("kind") == "channel");
  CHECK(lm.header.at("rows") == 7);
  CHECK(lm.header.at("cols") == 5);
  CHECK(lm.header.at("dtype") == "complex128");
  CHECK(lm.header.at("layout") == "col-major");
  CHECK(lm.header.at("endianness") == "little");
  CHECK(lm.header.at("meta") == meta);
  REQUIRE(lm.mat.rows() == m.rows());
  REQUIRE(lm.mat.cols() == m.cols());
  CHECK(std::memcmp(lm.mat.data(), m.data(),
                    sizeof(std::complex<double>) * (std::size_t)m.size()) == 0);
}

TEST_CASE("read_matrix rejects corrupted containers") {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(3, 3);
  std::string blob = encode_matrix(m, "test", nlohmann::json::object());
  fs::path dir = temp_dir();

  SECTION("flipped payload byte fails the checksum") {
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, blob.data() + 8, 8);
    std::string bad = blob;
    bad[16 + hlen + 3] ^= 0x40;
    fs::path p = dir / "bad_payload.oamao";
    atomic_write_file(p, bad);
    REQUIRE_THROWS_WITH(read_matrix(p), ContainsSubstring("checksum mismatch"));
  }
  SECTION("truncated payload fails the size check") {
    fs::path p = dir / "truncated.oamao";
    atomic_write_file(p, blob.substr(0, blob.size() - 8));
    REQUIRE_THROWS_WITH(read_matrix(p), ContainsSubstring("payload size mismatch"));
  }
  SECTION("wrong magic is rejected") {
    std::string bad = blob;
    bad[0] = 'X';
    fs::path p = dir / "bad_magic.oamao";
    atomic_write_file(p, bad);
    REQUIRE_THROWS_WITH(read_matrix(p), ContainsSubstring("bad magic"));
  }
  SECTION("empty file is rejected") {
    fs::path p = dir / "empty.oamao";
    atomic_write_file(p, "");
    REQUIRE_THROWS_WITH(read_matrix(p), ContainsSubstring("bad magic"));
  }
  SECTION("missing file is rejected") {
    REQUIRE_THROWS_WITH(read_matrix(dir / "nope.oamao"),
                        ContainsSubstring("cannot open"));
  }
}

TEST_CASE("config accepts each geometry style and reduces it consistently") {
  SECTION("dimensionless style") {
    RunConfig cfg = parse_config_text(kDimless);
    GeometrySummary s = geometry_summary(cfg);
    CHECK(s.geom.R_over_w == 9.2088);
    CHECK(s.t_z == 0.4234);
    CHECK(s.geom.z_over_zR == 0.4234);
    CHECK(s.geom.R_over_r0 == 9.2088 * 0.2165);
    CHECK(s.w0_over_r0 == 0.2165 / std::sqrt(1.0 + 0.4234 * 0.4234));
    CHECK(s.fried_r0 == 0.0);
  }
  SECTION("physical style reduces through the beam formulas") {
    RunConfig cfg = parse_config_text(R"({
      "geometry": {"Cn2": 5e-15, "wavelength": 1.064e-6, "z": 800.0,
                   "w0": 0.03, "R": 0.25},
      "correction": {"J": 10}
    })");
    GeometrySummary s = geometry_summary(cfg);
    double w0 = 0.03, lam = 1.064e-6, z = 800.0, R = 0.25, Cn2 = 5e-15;
    double zR = M_PI * w0 * w0 / lam;
    double t = z / zR;
    double w = w0 * std::sqrt(1.0 + t * t);
    double r0 = std::pow(16.6 * Cn2 * z / (lam * lam), -3.0 / 5.0);
    CHECK_THAT(s.t_z, Catch::Matchers::WithinRel(t, 1e-14));
    CHECK_THAT(s.fried_r0, Catch::Matchers::WithinRel(r0, 1e-13));
    CHECK_THAT(s.geom.R_over_w, Catch::Matchers::WithinRel(R / w, 1e-13));
    CHECK_THAT(s.w0_over_r0, Catch::Matchers::WithinRel(w0 / r0, 1e-13));
    CHECK_THAT(s.geom.R_over_r0, Catch::Matchers::WithinRel(R / r0, 1e-13));
  }
  SECTION("mixed and absent styles are rejected") {
    REQUIRE_THROWS_AS(parse_config_text(R"({
      "geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4, "Cn2": 1e-15},
      "correction": {"J": 10}
    })"),
                      ConfigError);
    REQUIRE_THROWS_AS(parse_config_text(R"({
      "geometry": {},
      "correction": {"J": 10}
    })"),
                      ConfigError);
  }
}

TEST_CASE("config rejects unknown keys and malformed blocks") {
  auto bad = [](const std::string& text) {
    REQUIRE_THROWS_AS(parse_config_text(text), ConfigError);
  };
  // not an object / not JSON
  bad("[]");
  bad("{geometry}");
  // unknown keys
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "extra": 1})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4, "w0": 1},
          "correction": {"J": 10}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "numerics": {"foo": 1}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "output": {"file": "x"}})");
  // non-positive scales
  bad(R"({"geometry": {"R_over_w": 0, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": -0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}})");
  // correction block shape
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10, "J_list": [5]}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 0}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 1.5}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J_list": []}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J_list": [3, "x"]}})");
  // truncation must cover, entries nonnegative integers
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10},
          "truncation": {"l_in_max": 3, "p_in_max": 2, "l_out_max": 2, "p_out_max": 2}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10},
          "truncation": {"l_in_max": 2, "p_in_max": -1, "l_out_max": 2, "p_out_max": 2}})");
  // probabilities and oracle enums
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "probabilities": {"scan": "sideways"}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "probabilities": {"initial_l": 3}})");
  bad(R"({"geometry": {"R_over_w": 3, "w_over_r0": 0.2, "z_over_zR": 0.4},
          "correction": {"J": 10}, "oracle": {"mode": "guess"}})");
}

TEST_CASE("dotted overrides reach nested keys and create missing blocks") {
  RunConfig cfg = parse_config_text(kDimless);

  apply_override(cfg, "correction.J=15");
  CHECK(cfg.j.at("correction").at("J") == 15);

  apply_override(cfg, "geometry.R_over_w=3");
  CHECK(cfg.j.at("geometry").at("R_over_w") == 3);

  apply_override(cfg, "numerics.optimizer_starts=12");
  CHECK(cfg.j.at("numerics").at("optimizer_starts") == 12);

  apply_override(cfg, "output.directory=results");
  CHECK(cfg.j.at("output").at("directory") == "results");

  validate_config(cfg);

  REQUIRE_THROWS_AS(apply_override(cfg, "noequals"), ConfigError);
  REQUIRE_THROWS_AS(apply_override(cfg, "=5"), ConfigError);
  REQUIRE_THROWS_AS(apply_override(cfg, "a..b=1"), ConfigError);
}

TEST_CASE("parse, dump, and reparse preserve the configuration") {
  RunConfig c1 = parse_config_text(R"({
    "geometry": {"R_over_w": 9.8596, "w_over_r0": 0.1167, "z_over_zR": 0.1693},
    "correction": {"J_list": [10, 15, 20, 30]},
    "truncation": {"l_in_max": 3, "p_in_max": 6, "l_out_max": 6, "p_out_max": 6},
    "numerics": {"n_max": 9, "neg_tol": 1e-10, "optimizer_starts": 32,
                 "optimizer_seed": 7, "optimizer_tol": 1e-9, "optimizer_max_iters": 500},
    "probabilities": {"scan": "delta_l", "initial_l": 3, "initial_p": 0,
                      "range_min": -6, "range_max": 6},
    "oracle": {"mode": "mc", "n_samples": 1000, "seed": 42},
    "output": {"directory": "out"}
  })");
  RunConfig c2 = parse_config_text(c1.j.dump(2));
  CHECK(c1.j == c2.j);
  CHECK(correction_list(c1) == std::vector<int>{10, 15, 20, 30});
}

TEST_CASE("channel_params, optimizer_options, and kraus_neg_tol read their blocks") {
  SECTION("defaults") {
    RunConfig cfg = parse_config_text(kDimless);
    ChannelParams p = channel_params(cfg, 12);
    CHECK(p.J == 12);
    CHECK(p.n_max == 9);
    CHECK(p.in.l_max == 3);
    CHECK(p.in.p_max == 6);
    CHECK(p.out.l_max == 6);
    CHECK(p.out.p_max == 6);
    CHECK(p.geom.R_over_w == 9.2088);
    CHECK(correction_list(cfg) == std::vector<int>{10});

    MinFidelityOptions o = optimizer_options(cfg);
    CHECK(o.n_starts == 64);
    CHECK(o.max_iters == 2000);
    CHECK(o.tol == 1e-8);
    CHECK(o.seed == 0x6f616d616f5f6d66ull);
    CHECK(kraus_neg_tol(cfg) == 1e-12);
  }
  SECTION("explicit blocks override the defaults") {
    RunConfig cfg = parse_config_text(R"({
      "geometry": {"R_over_w": 9.2088, "w_over_r0": 0.2165, "z_over_zR": 0.4234},
      "correction": {"J": 10},
      "truncation": {"l_in_max": 2, "p_in_max": 1, "l_out_max": 4, "p_out_max": 3},
      "numerics": {"n_max": 7, "neg_tol": 1e-9, "optimizer_starts": 12,
                   "optimizer_seed": 99, "optimizer_tol": 1e-6,
                   "optimizer_max_iters": 250}
    })");
    ChannelParams p = channel_params(cfg, 5);
    CHECK(p.n_max == 7);
    CHECK(p.in.l_max == 2);
    CHECK(p.in.p_max == 1);
    CHECK(p.out.l_max == 4);
    CHECK(p.out.p_max == 3);

    MinFidelityOptions o = optimizer_options(cfg);
    CHECK(o.n_starts == 12);
    CHECK(o.max_iters == 250);
    CHECK(o.tol == 1e-6);
    CHECK(o.seed == 99);
    CHECK(kraus_neg_tol(cfg) == 1e-9);
  }
}
