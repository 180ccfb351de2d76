// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "qrlora/artifacts.hpp"
#include "qrlora/cli.hpp"
#include "qrlora/container.hpp"
#include "support.hpp"

using namespace qrlora;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "qrlora");
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> v;
  for (std::string s; std::getline(in, s);) v.push_back(s);
  return v;
}

std::string error_code(const Run& r) {
  return nlohmann::json::parse(r.err).at("error").at("code").get<std::string>();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("grid and shape parsing") {
  const std::vector<double> g = parse_lambda_grid("0.5:1.0:0.1");
  REQUIRE(g.size() == 6);
  CHECK(g.front() == 0.5);
  CHECK(g.back() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(parse_lambda_grid("1:1:0.5").size() == 1);
  CHECK(code_of([] { parse_lambda_grid("0.5:1.0"); }) == ErrorCode::kUsage);
  CHECK(code_of([] { parse_lambda_grid("0.5:1.0:0"); }) == ErrorCode::kUsage);
  CHECK(code_of([] { parse_lambda_grid("1.0:0.5:0.1"); }) == ErrorCode::kUsage);
  CHECK(parse_shape("16x8") == std::pair<std::size_t, std::size_t>{16, 8});
  CHECK(code_of([] { parse_shape("16"); }) == ErrorCode::kUsage);
}

TEST_CASE("usage errors exit 1 with a JSON error") {
  const Run none = run({});
  CHECK(none.code == 1);
  CHECK(error_code(none) == "USAGE");
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"decompose", "--rank", "4"}).code == 1);
  const Run bad = run({"gen-weights", "--shape", "4by4", "--out", "/tmp/x.qrla"});
  CHECK(bad.code == 1);
}

TEST_CASE("full pipeline") {
  TempDir d("qrlora_test_cli");
  REQUIRE(run({"gen-weights", "--shape", "16x16", "--seed", "3", "--out", d / "w.qrla"}).code == 0);
  REQUIRE(run({"gen-weights", "--shape", "16x16", "--seed", "4", "--out", d / "w2.qrla"}).code == 0);

  const Run too_big = run({"decompose", "--weights", d / "w.qrla", "--out", d / "b.qrla"});
  CHECK(too_big.code == 2);
  CHECK(error_code(too_big) == "RANK_OUT_OF_RANGE");

  REQUIRE(run({"decompose", "--weights", d / "w.qrla", "--rank", "8", "--out", d / "b.qrla"}).code == 0);
  REQUIRE(run({"decompose", "--weights", d / "w2.qrla", "--rank", "8", "--out", d / "b2.qrla"}).code == 0);
  CHECK(run({"verify", d / "b.qrla"}).code == 0);

  REQUIRE(run({"init", "--basis", d / "b.qrla", "--role", "content", "--out", d / "c.qrla"}).code == 0);
  REQUIRE(run({"init", "--basis", d / "b.qrla", "--role", "style", "--out", d / "s.qrla"}).code == 0);
  REQUIRE(run({"init", "--basis", d / "b2.qrla", "--role", "style", "--out", d / "x.qrla"}).code == 0);
  CHECK(run({"init", "--basis", d / "b.qrla", "--role", "sketch", "--out", d / "y.qrla"}).code == 1);

  const Run tc = run({"train", "--adapter", d / "c.qrla", "--strategy", "delta-r-only", "--task-seed",
                      "1", "--steps", "40", "--lr", "0.05", "--trace", d / "c.csv", "--out",
                      d / "ct.qrla"});
  REQUIRE(tc.code == 0);
  const auto trace = lines(d / "c.csv");
  REQUIRE(trace.size() == 42);
  CHECK(trace[0] == "step,loss");
  CHECK(trace[1].rfind("0,", 0) == 0);
  REQUIRE(run({"train", "--adapter", d / "s.qrla", "--strategy", "delta-r-only", "--task-seed", "2",
               "--steps", "40", "--out", d / "st.qrla"})
              .code == 0);
  CHECK(run({"verify", d / "ct.qrla"}).code == 0);

  for (const char* s : {"direct-qr", "vanilla-lora"}) {
    const Run r = run({"train", "--adapter", d / "c.qrla", "--strategy", s, "--steps", "10"});
    CHECK(r.code == 0);
    CHECK(fs::exists(d.path / (std::string("c.") + s + ".qrla")));
    CHECK(run({"verify", d / (std::string("c.") + s + ".qrla")}).code == 0);
  }

  REQUIRE(run({"merge", "--inputs", d / "ct.qrla" + "," + d / "st.qrla", "--lambdas", "0.7,0.6",
               "--out", d / "m.qrla"})
              .code == 0);
  const Adapter m = load_adapter(read_container(d / "m.qrla"));
  const Adapter c = load_adapter(read_container(d / "ct.qrla"));
  const Adapter s = load_adapter(read_container(d / "st.qrla"));
  CHECK(m.delta_r == 0.7 * c.delta_r + 0.6 * s.delta_r);
  CHECK(m.role == "generic");
  CHECK(run({"verify", d / "m.qrla"}).code == 0);

  const Run mismatch = run({"merge", "--inputs", d / "ct.qrla" + "," + d / "x.qrla", "--out", d / "bad.qrla"});
  CHECK(mismatch.code == 2);
  CHECK(error_code(mismatch) == "BASIS_MISMATCH");
  CHECK_FALSE(fs::exists(d.path / "bad.qrla"));
  CHECK(run({"merge", "--inputs", d / "ct.qrla" + "," + d / "x.qrla", "--lambdas", "1", "--out",
             d / "bad.qrla"})
            .code == 1);

  const Run sweep = run({"sweep", "--adapter-c", d / "ct.qrla", "--adapter-s", d / "st.qrla",
                         "--lambda-grid", "0.5:1.0:0.1", "--out", d / "sweep.csv"});
  REQUIRE(sweep.code == 0);
  const auto rows = lines(d / "sweep.csv");
  CHECK(rows.size() == 37);
  CHECK(rows[0] == "lambda_c,lambda_s,delta_w_fro,delta_w_rel");

  const Run sim = run({"similarity", "--a", d / "ct.qrla", "--b", d / "st.qrla", "--kind", "deltaR",
                       "--out", d / "sim.csv"});
  REQUIRE(sim.code == 0);
  const auto sim_rows = lines(d / "sim.csv");
  REQUIRE(sim_rows.size() == 2);
  CHECK(sim_rows[0] == "layer_index,layer_name,cosine");

  const Run missing = run({"verify", d / "nope.qrla"});
  CHECK(missing.code == 3);
  CHECK(error_code(missing) == "IO_ERROR");
}

TEST_CASE("verify flags corruption") {
  TempDir d("qrlora_test_cli_verify");
  REQUIRE(run({"gen-weights", "--shape", "8x6", "--seed", "1", "--out", d / "w.qrla"}).code == 0);
  REQUIRE(run({"decompose", "--weights", d / "w.qrla", "--rank", "3", "--out", d / "b.qrla"}).code == 0);
  auto bytes = read_file_bytes(d.path / "b.qrla");
  bytes[bytes.size() - 20] ^= 0x10;
  write_file_bytes(d.path / "b.qrla", bytes);
  const Run r = run({"verify", d / "b.qrla"});
  CHECK(r.code == 2);
  CHECK(error_code(r) == "CHECKSUM_MISMATCH");
}

TEST_CASE("study writes a table, series and reloadable runs") {
  TempDir d("qrlora_test_cli_study");
  const Run r = run({"study", "--pairs", "2", "--steps", "30", "--out", d / "t.csv", "--series-dir",
                     d / "series", "--save-runs", d / "runs"});
  REQUIRE(r.code == 0);
  const auto table = lines(d / "t.csv");
  REQUIRE(table.size() == 3);
  CHECK(table[0] == "sample_index,Q_max,Q_min,R_max,R_min,dR_max,dR_min,A_max,A_min,B_max,B_min");
  CHECK(table[1].rfind("0,", 0) == 0);
  CHECK_FALSE(fs::is_empty(d.path / "series"));

  const Run again = run({"study", "--pairs", "2", "--from-files", d / "runs", "--out", d / "t2.csv"});
  REQUIRE(again.code == 0);
  CHECK(lines(d / "t2.csv") == table);

  const Run dirs = run({"similarity", "--a", d / "runs/pair_0/delta-r-only_a", "--b",
                        d / "runs/pair_0/delta-r-only_b", "--out", d / "s.csv"});
  CHECK(dirs.code == 0);
  CHECK(lines(d / "s.csv").size() == 4);
  CHECK(run({"study", "--pairs", "0", "--out", d / "t3.csv"}).code == 2);
}
