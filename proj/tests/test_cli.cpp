/*
 * Copyright 2026 The pfderiv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("pf_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run pf(const std::string& args) {
  const fs::path out = scratch_dir() / "stdout.txt", err = scratch_dir() / "stderr.txt";
  const std::string cmd = std::string("\"") + PF_BINARY + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("model list names the shipped models") {
  const Run r = pf("model list");
  CHECK(r.code == 0);
  for (const char* name : {"grid5", "grid2", "grid3", "interval"}) CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("oracle table shape") {
  const Run r = pf("oracle --model grid5 --n 5 --seed 3");
  CHECK(r.code == 0);
  CHECK(count_lines(r.out) == 31);
  CHECK(r.out.rfind("n,state,P,Q_1,Q_2,Q_3\n", 0) == 0);
  CHECK(r.err.rfind("# pf oracle", 0) == 0);
}

TEST_CASE("run is reproducible for a fixed seed") {
  const Run a = pf("run --seed 1 --n 8 --particles 40 --matrices");
  const Run b = pf("run --seed 1 --n 8 --particles 40 --matrices --threads 2");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(count_lines(a.out) == 10);
  const Run c = pf("run --seed 2 --n 8 --particles 40 --matrices");
  CHECK(c.out != a.out);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(pf("run --n 4").code == 2);
  CHECK(pf("run --seed 1 --bogus").code == 2);
  CHECK(pf("frobnicate").code == 2);
  CHECK(pf("run --seed 1 --model nosuchmodel").code == 2);
  CHECK(pf("run --seed 1 --theta 9,9,9").code == 2);
  CHECK(pf("mixing-check --model interval").code == 2);
  CHECK(pf("bias-sweep --seed 1 --reps 10").code == 2);
}

TEST_CASE("mixing check on a tabulated model needs no seed") {
  const Run r = pf("mixing-check --model grid5 --corners");
  CHECK(r.code == 0);
}

TEST_CASE("config file values are overridden by flags") {
  const fs::path cfg = scratch_dir() / "pf.toml";
  {
    std::ofstream os(cfg);
    os << "[simulate]\nseed = 4\nn = 3\n";
  }
  const Run a = pf("--config \"" + cfg.string() + "\" simulate");
  CHECK(a.code == 0);
  CHECK(count_lines(a.out) == 5);
  const Run b = pf("--config \"" + cfg.string() + "\" simulate --n 6");
  CHECK(b.code == 0);
  CHECK(count_lines(b.out) == 8);
  CHECK(a.out == pf("simulate --seed 4 --n 3").out);
}

}  // TEST_SUITE
