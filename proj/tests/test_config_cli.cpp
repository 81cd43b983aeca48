#include <gtest/gtest.h>
#include <sys/wait.h>

#include <unistd.h>

#include <cmath>
#include <numbers>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qlink/config.hpp"
#include "qlink/io.hpp"

namespace fs = std::filesystem;
using namespace qlink;

namespace {

std::string config_path(const std::string& name) {
  return std::string(QLINK_SOURCE_DIR) + "/configs/" + name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(QLINK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("qlink_test_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

int error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(ConfigParse, SectionsCommentsAndWhitespace) {
  auto raw = parse_config_text(
      "# header\n"
      "[scenario]\n"
      "kind = delivery   # trailing\n"
      "\n"
      "  seed=99\n"
      "[grid]\n"
      "alpha = 0.1, 0.2\n");
  EXPECT_EQ(raw.at("scenario.kind").value, "delivery");
  EXPECT_EQ(raw.at("scenario.seed").line, 5);
  auto spec = build_spec(raw);
  EXPECT_EQ(spec.scenario, Scenario::DeliverySweep);
  EXPECT_EQ(spec.seed, 99u);
  EXPECT_EQ(spec.alphas, (std::vector<double>{0.1, 0.2}));
}

TEST(ConfigParse, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("[scenario]\nkind = alpha\nbogus = 1\n"), 3);
  EXPECT_EQ(error_line("[scenario]\nseed = 1\n\nseed = 2\n"), 4);
  EXPECT_EQ(error_line("[scenario\n"), 1);
  EXPECT_EQ(error_line("[scenario]\nno equals sign\n"), 2);
  try {
    build_spec(parse_config_text("[station]\n\nvisibility = 1.7\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.key(), "station.visibility");
  }
  try {
    build_spec(parse_config_text("[scenario]\ncycles_per_point = many\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(ConfigParse, CrossFieldValidation) {
  EXPECT_THROW(build_spec(parse_config_text("[grid]\nalpha = 1.5\n")), ConfigError);
  EXPECT_THROW(build_spec(parse_config_text("[tomography]\nshots = 0\n")), ConfigError);
  EXPECT_THROW(build_spec(parse_config_text("[scenario]\ncycles_per_point = 0\n")), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/file.cfg"), ConfigError);
}

TEST(ConfigParse, Overrides) {
  RawConfig raw = load_config_file(config_path("delivery.cfg"));
  EXPECT_THROW(apply_override(raw, "cycle.nonsense=3"), ConfigError);
  EXPECT_THROW(apply_override(raw, "cycle.batch_size"), ConfigError);
  apply_override(raw, "scenario.cycles_per_point = 20");
  EXPECT_EQ(build_spec(raw).cycles_per_point, 20);
}

TEST(ConfigParse, OverrideMatchesFileEdit) {
  RawConfig a = parse_config_text("[scenario]\nkind = delivery\ncycles_per_point = 30\n[grid]\nalpha = 0.2\ndelivery_rate_hz = 9\n");
  apply_override(a, "station.visibility=0.8");
  RawConfig b = parse_config_text("[scenario]\nkind = delivery\ncycles_per_point = 30\n[grid]\nalpha = 0.2\ndelivery_rate_hz = 9\n[station]\nvisibility = 0.8\n");
  EXPECT_EQ(run_stats_csv(run_sweep(build_spec(a))), run_stats_csv(run_sweep(build_spec(b))));
}

TEST(ConfigParse, DefaultTextRoundTrips) {
  auto raw = parse_config_text(default_config_text());
  EXPECT_EQ(raw.size(), config_schema().size());
  SweepSpec from_text = build_spec(raw);
  SweepSpec from_defaults = build_spec({});
  from_text.cycles_per_point = from_defaults.cycles_per_point = 40;
  EXPECT_EQ(run_stats_csv(run_sweep(from_text)), run_stats_csv(run_sweep(from_defaults)));
}

TEST(ConfigParse, ShippedConfigsValidate) {
  for (const char* name : {"tradeoff.cfg", "phase_scan.cfg", "storage.cfg", "delivery.cfg"}) {
    EXPECT_NO_THROW(build_spec(load_config_file(config_path(name)))) << name;
  }
}

TEST(Cli, SweepIsReproducibleAndThreadInvariant) {
  TempDir dir;
  const std::string base = "sweep -c " + config_path("delivery.cfg") + " --override scenario.cycles_per_point=40";
  ASSERT_EQ(run_cli(base + " --seed 7 -t 1 -o " + (dir / "a.csv").string() + " --cycles-json " + (dir / "a.ndjson").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 7 -t 1 -o " + (dir / "b.csv").string() + " --cycles-json " + (dir / "b.ndjson").string()), 0);
  ASSERT_EQ(run_cli(base + " --seed 7 -t 4 -o " + (dir / "c.csv").string() + " --cycles-json " + (dir / "c.ndjson").string()), 0);
  std::string a = read_file(dir / "a.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read_file(dir / "b.csv"));
  EXPECT_EQ(a, read_file(dir / "c.csv"));
  EXPECT_EQ(read_file(dir / "a.ndjson"), read_file(dir / "c.ndjson"));
  ASSERT_EQ(run_cli(base + " --seed 8 -o " + (dir / "d.csv").string()), 0);
  EXPECT_NE(a, read_file(dir / "d.csv"));
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("validate-config -c " + config_path("storage.cfg")), 0);
  EXPECT_EQ(run_cli("validate-config --defaults"), 0);
  std::ofstream(dir / "bad.cfg") << "[station]\nvisibility = 2\n";
  const fs::path out = dir / "out.csv";
  EXPECT_EQ(run_cli("sweep -c " + (dir / "bad.cfg").string() + " -o " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("sweep -c " + config_path("delivery.cfg") + " --override no.such=1 -o " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("analytic --eta 1,-2 -o " + (dir / "an").string()), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
}

TEST(Cli, AnalyticOutputs) {
  TempDir dir;
  ASSERT_EQ(run_cli("analytic --eta 0.1,1,10 --points 11 -o " + (dir / "an").string()), 0);
  std::istringstream curves(read_file(dir / "an" / "f_succ.csv"));
  std::string line;
  std::getline(curves, line);
  EXPECT_EQ(line, "eta,p_succ,fidelity");
  int rows = 0;
  while (std::getline(curves, line)) ++rows;
  EXPECT_EQ(rows, 33);
  std::istringstream thr(read_file(dir / "an" / "threshold.csv"));
  std::getline(thr, line);
  std::getline(thr, line);
  double eta = std::stod(line.substr(0, line.find(',')));
  double f = std::stod(line.substr(line.find(',') + 1));
  EXPECT_NEAR(eta, 0.83, 0.01);
  EXPECT_NEAR(f, 0.5, 1e-9);
  EXPECT_NE(read_file(dir / "an" / "rates.csv").find("rate_advantage"), std::string::npos);
}

TEST(Cli, PhaseResidual) {
  TempDir dir;
  const fs::path out = dir / "phase.csv";
  ASSERT_EQ(run_cli("phase --duration 60 -o " + out.string()), 0);
  std::istringstream in(read_file(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time_s,theta_rad,event");
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  while (std::getline(in, line)) {
    auto c1 = line.find(',');
    double th = std::stod(line.substr(c1 + 1, line.find(',', c1 + 1) - c1 - 1));
    sum += th;
    sum2 += th * th;
    ++n;
  }
  ASSERT_GT(n, 50000);
  double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n)) * 180.0 / std::numbers::pi;
  EXPECT_NEAR(sd, 14.3, 1.5);
}
