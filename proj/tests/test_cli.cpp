#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "nvdeer/deer_single.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("nvdeer_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
    return path(name);
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = nvdeer::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

Result run_cmd(const std::string& cmd, const std::string& config, const std::string& out,
               std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {cmd, "--config", config, "--out", out};
  args.insert(args.end(), extra.begin(), extra.end());
  return run(args);
}

// Rows after the '#' metadata and the column header.
std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

std::string column_header(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  return {};
}

std::string config_echo(const std::string& text) {
  const std::string tag = "# config: ";
  const auto pos = text.find(tag);
  REQUIRE(pos != std::string::npos);
  const auto end = text.find('\n', pos);
  return text.substr(pos + tag.size(), end - pos - tag.size());
}

const char* spectrum_config = R"({"c": 1.0, "rabi_MHz": 5, "length_us": 0.1,
  "detuning_MHz": {"start": -20, "stop": 20, "count": 401}})";
const char* rabi_config = R"({"c": 10.0, "rabi_MHz": 5, "length_us": {"start": 0, "stop": 0.2, "count": 41}})";
const char* epr_config = R"({"system": "Cu2+", "field": {"B_G": 192, "theta_deg": 29},
  "broaden": {"fwhm_MHz": 5, "frequency_MHz": {"start": 400, "stop": 1200, "count": 161}}})";
const char* fit_config = R"({"system": "Cu2+",
  "peaks": [{"frequency_MHz": 486, "uncertainty_MHz": 2}, {"frequency_MHz": 811, "uncertainty_MHz": 2},
            {"frequency_MHz": 1104, "uncertainty_MHz": 2}],
  "B_G": {"start": 185, "stop": 225, "count": 41}, "theta_deg": {"start": 20, "stop": 55, "count": 36}})";
const char* volume_config = R"({"depth_nm": 70, "density_per_nm3": 0.6})";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"deer-spectrum", "--help"}).code == 0);
  CHECK(run({"--version"}).code == 0);
  CHECK(run({}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"epr", "--out", "x.csv"}).code == 2);
  CHECK(run({"deer-rabi", "--config", "a", "--out", "b", "--mode", "both"}).code == 2);
}

TEST_CASE("config diagnostics") {
  Scratch s;
  const auto out = s.path("o.csv");

  auto r = run_cmd("deer-spectrum", s.path("missing.json"), out);
  CHECK(r.code == 2);

  r = run_cmd("deer-spectrum", s.write("bad.json", "{\n  \"c\": 1.0,\n  \"rabi_MHz\": ,\n}"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find(":3:") != std::string::npos);

  r = run_cmd("deer-spectrum", s.write("unknown.json", R"({"c": 1, "rabi_MHz": 5, "length_us": 0.1,
      "detuning_MHz": [0], "colour": "red"})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/colour") != std::string::npos);

  r = run_cmd("deer-spectrum", s.write("empty.json", R"({"c": 1, "rabi_MHz": 5, "length_us": 0.1, "detuning_MHz": []})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/detuning_MHz") != std::string::npos);

  r = run_cmd("deer-spectrum", s.write("neg.json", R"({"c": 1, "rabi_MHz": -5, "length_us": 0.1, "detuning_MHz": [0]})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/rabi_MHz") != std::string::npos);

  r = run_cmd("deer-spectrum", s.write("both.json", R"({"c": 1, "rabi_MHz": 5, "length_us": 0.1, "detuning_MHz": [0],
      "frequency_MHz": [500], "resonance_MHz": 500})"), out);
  CHECK(r.code == 2);

  r = run_cmd("deer-spectrum", s.write("nested.json", R"({"c": 1, "rabi_MHz": 5, "length_us": 0.1, "detuning_MHz": [0],
      "quadrature": {"n_phi1": 2}})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/quadrature/n_phi1") != std::string::npos);

  r = run_cmd("deer-rabi", s.write("wrongmode.json", R"({"c": 1, "rabi_MHz": 5, "length_us": [0]})"), out,
              {"--mode", "ensemble"});
  CHECK(r.code == 2);

  r = run_cmd("epr", s.write("preset.json", R"({"system": "Fe3+", "field": {"B_G": 100, "theta_deg": 0}})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/system") != std::string::npos);

  r = run_cmd("fit", s.write("peaks.json", R"({"system": "Cu2+", "peaks": [{"frequency_MHz": 486}],
      "B_G": [190], "theta_deg": [30]})"), out);
  CHECK(r.code == 2);
  CHECK(r.err.find("/peaks/0/uncertainty_MHz") != std::string::npos);

  r = run_cmd("volume", s.write("vol.json", R"({"depth_nm": 70})"), out);
  CHECK(r.code == 2);

  r = run_cmd("epr", s.write("notobj.json", "[1, 2]"), out);
  CHECK(r.code == 2);
}

TEST_CASE("deer-spectrum output") {
  Scratch s;
  const auto r = run_cmd("deer-spectrum", s.write("c.json", spectrum_config), s.path("o.csv"));
  REQUIRE(r.code == 0);
  const std::string text = slurp(s.path("o.csv"));
  CHECK(text.rfind("# nvdeer ", 0) == 0);
  CHECK(text.find("# seed: 0\n") != std::string::npos);
  CHECK(column_header(text) == "detuning_MHz,signal,est_error,converged");
  const auto rows = csv_rows(text);
  REQUIRE(rows.size() == 401);

  const nvdeer::EchoConfig echo{6.0, nvdeer::UnitVector3d::unit_z()};
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ref = nvdeer::deer_signal_quadrature(1.0, echo, nvdeer::DrivePulse(5.0, rows[i][0], 0.1));
    CHECK(rows[i][1] == ref.value);
    CHECK(rows[i][3] == 1.0);
    if (rows[i][1] < rows[argmin][1]) argmin = i;
  }
  CHECK(rows[argmin][0] == doctest::Approx(0.0));
  // revival maxima near +-8.660 MHz (grid step 0.1 MHz)
  for (double target : {-8.660, 8.660}) {
    bool found = false;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
      if (rows[i][1] > rows[i - 1][1] && rows[i][1] > rows[i + 1][1] && std::abs(rows[i][0] - target) <= 0.3) found = true;
    }
    CHECK(found);
  }

  // absolute frequency grid with a resonance gives the same signal column
  const auto f = run_cmd("deer-spectrum", s.write("f.json", R"({"c": 1.0, "rabi_MHz": 5, "length_us": 0.1,
      "frequency_MHz": [490, 495, 500], "resonance_MHz": 495})"), s.path("f.csv"));
  REQUIRE(f.code == 0);
  const std::string ftext = slurp(s.path("f.csv"));
  CHECK(column_header(ftext) == "frequency_MHz,signal,est_error,converged");
  const auto frows = csv_rows(ftext);
  REQUIRE(frows.size() == 3);
  CHECK(frows[1][1] == rows[200][1]);
  CHECK(frows[0][1] == doctest::Approx(rows[150][1]).epsilon(1e-12));
}

TEST_CASE("deer-rabi output") {
  Scratch s;
  REQUIRE(run_cmd("deer-rabi", s.write("c.json", rabi_config), s.path("o.csv")).code == 0);
  const std::string text = slurp(s.path("o.csv"));
  CHECK(column_header(text) == "t_p_us,signal,est_error,converged");
  const auto rows = csv_rows(text);
  REQUIRE(rows.size() == 41);
  CHECK(rows[0][1] == 1.0);

  REQUIRE(run_cmd("deer-rabi", s.write("e.json", R"({"n_c2": 100, "rabi_MHz": 5,
      "length_us": {"start": 0, "stop": 0.1, "count": 21}})"), s.path("e.csv"), {"--mode", "ensemble"}).code == 0);
  const auto erows = csv_rows(slurp(s.path("e.csv")));
  CHECK(erows[0][1] == 1.0);
  for (std::size_t i = 1; i < erows.size(); ++i) CHECK(erows[i][1] <= erows[i - 1][1]);
  CHECK(slurp(s.path("e.csv")).find("\"mode\":\"ensemble\"") != std::string::npos);
}

TEST_CASE("epr output") {
  Scratch s;
  REQUIRE(run_cmd("epr", s.write("c.json", epr_config), s.path("o.csv")).code == 0);
  const std::string text = slurp(s.path("o.csv"));
  CHECK(column_header(text) == "frequency_MHz,intensity");
  const auto rows = csv_rows(text);
  for (double target : {486.0, 811.0, 1104.0}) {
    bool found = false;
    for (const auto& row : rows) found = found || (std::abs(row[0] - target) <= 30 && row[1] > 0.5);
    CHECK(found);
  }
  CHECK(csv_rows(slurp(s.path("o.csv.broadened.csv"))).size() == 161);

  REQUIRE(run_cmd("epr", s.write("e.json", R"({"system": "free-electron", "field": {"vector_G": [0, 0, 200]}})"),
                  s.path("e.csv")).code == 0);
  const auto erows = csv_rows(slurp(s.path("e.csv")));
  REQUIRE(erows.size() == 1);
  CHECK(std::abs(erows[0][0] - 560.0) <= 1.0);

  // inline system overriding a preset
  REQUIRE(run_cmd("epr", s.write("i.json", R"({"system": {"preset": "Cu2+", "A_MHz": [0, 0, 0], "I": 0},
      "field": {"B_G": 200, "theta_deg": 0}})"), s.path("i.csv")).code == 0);
  const auto irows = csv_rows(slurp(s.path("i.csv")));
  REQUIRE(irows.size() == 1);
  CHECK(irows[0][0] == doctest::Approx(2.415 * 1.399624 * 200).epsilon(1e-12));
}

TEST_CASE("fit output") {
  Scratch s;
  REQUIRE(run_cmd("fit", s.write("c.json", fit_config), s.path("o.csv")).code == 0);
  CHECK(column_header(slurp(s.path("o.csv"))) == "B,theta,chi2");
  CHECK(csv_rows(slurp(s.path("o.csv"))).size() == 41 * 36);
  const json report = json::parse(slurp(s.path("o.csv.minima.json")));
  CHECK(report["feasible"] == true);
  bool first = false, second = false;
  for (const auto& m : report["minima"]) {
    const double b = m["B_G"], th = m["theta_deg"];
    first = first || (std::abs(b - 192) <= 3 && std::abs(th - 29) <= 3);
    second = second || (std::abs(b - 220) <= 3 && std::abs(th - 50) <= 3);
    CHECK(m["interval"]["B_G"]["lower"].get<double>() <= b);
  }
  CHECK(first);
  CHECK(second);

  // single-cell grid reports that cell
  REQUIRE(run_cmd("fit", s.write("one.json", R"({"system": "Cu2+", "peaks": [{"frequency_MHz": 486, "fwhm_MHz": 4}],
      "B_G": [200], "theta_deg": [40], "report": ")" + s.path("one.json.out") + R"("})"), s.path("one.csv")).code == 0);
  const json one = json::parse(slurp(s.path("one.json.out")));
  REQUIRE(one["minima"].size() == 1);
  CHECK(one["minima"][0]["B_G"] == 200.0);

  // more peaks than lines anywhere on the grid
  const auto r = run_cmd("fit", s.write("inf.json", R"({"system": "free-electron",
      "peaks": [{"frequency_MHz": 100, "uncertainty_MHz": 1}, {"frequency_MHz": 200, "uncertainty_MHz": 1}],
      "B_G": [100, 200], "theta_deg": [0, 10]})"), s.path("inf.csv"));
  CHECK(r.code == 3);
  CHECK(r.err.find("no feasible fit") != std::string::npos);
}

TEST_CASE("volume report") {
  Scratch s;
  REQUIRE(run_cmd("volume", s.write("c.json", volume_config), s.path("o.json")).code == 0);
  const json report = json::parse(slurp(s.path("o.json")));
  CHECK(std::cbrt(report["kappa_nm3"].get<double>()) == doctest::Approx(9.9).epsilon(0.02));
  CHECK(report["threshold_depth_nm"].get<double>() == doctest::Approx(67.1).epsilon(0.01));
  CHECK(report["detectable"] == false);
  CHECK(report["message"] == "nothing detectable");
  CHECK(report["detectability_radius_nm"].get<double>() == doctest::Approx(142.0).epsilon(0.01));

  REQUIRE(run_cmd("volume", s.write("z.json", R"({"depth_nm": 10, "density_per_nm3": 0})"), s.path("z.json.out")).code == 0);
  const json zero = json::parse(slurp(s.path("z.json.out")));
  CHECK(zero["detectable"] == false);
  CHECK(zero["message"] == "nothing detectable");
  CHECK(zero["threshold_depth_nm"].is_null());

  REQUIRE(run_cmd("volume", s.write("d.json", R"({"depth_nm": 20, "density": {"amount_mol": 5e-10, "volume_mm3": 4.4e-4}})"),
                  s.path("d.json.out")).code == 0);
  const json dens = json::parse(slurp(s.path("d.json.out")));
  CHECK(dens["spin_density_per_nm3"].get<double>() == doctest::Approx(0.684).epsilon(1e-3));
  CHECK(dens["detectable"] == true);
  CHECK_FALSE(dens.contains("message"));
}

TEST_CASE("every subcommand is deterministic") {
  Scratch s;
  struct Case {
    std::string cmd, config, ext;
    std::vector<std::string> extra;
  };
  const std::vector<Case> cases = {
      {"deer-spectrum", spectrum_config, ".csv", {}},
      {"deer-spectrum", R"({"c": 2.0, "rabi_MHz": 5, "length_us": 0.1, "detuning_MHz": [-5, 0, 5],
          "estimator": "montecarlo", "n_samples": 20000})", ".csv", {"--seed", "42"}},
      {"deer-rabi", rabi_config, ".csv", {}},
      {"deer-rabi", R"({"n_c2": 9, "rabi_MHz": 5, "length_us": [0, 0.05, 0.1], "estimator": "montecarlo",
          "n_samples": 5000, "n_spins": 20})", ".csv", {"--mode", "ensemble", "--seed", "7"}},
      {"epr", epr_config, ".csv", {}},
      {"fit", fit_config, ".csv", {}},
      {"volume", volume_config, ".json", {}},
  };
  int k = 0;
  for (const auto& c : cases) {
    CAPTURE(c.cmd);
    const auto cfg = s.write("cfg" + std::to_string(k) + ".json", c.config);
    const auto a = s.path("a" + std::to_string(k) + c.ext);
    const auto b = s.path("b" + std::to_string(k) + c.ext);
    auto one = c.extra;
    one.insert(one.end(), {"--threads", "1"});
    auto many = c.extra;
    many.insert(many.end(), {"--threads", "4"});
    REQUIRE(run_cmd(c.cmd, cfg, a, one).code == 0);
    REQUIRE(run_cmd(c.cmd, cfg, b, many).code == 0);
    CHECK(slurp(a) == slurp(b));
    if (c.cmd == "epr") CHECK(slurp(a + ".broadened.csv") == slurp(b + ".broadened.csv"));
    if (c.cmd == "fit") CHECK(slurp(a + ".minima.json") == slurp(b + ".minima.json"));
    ++k;
  }
}

TEST_CASE("seed changes Monte Carlo output and is echoed") {
  Scratch s;
  const auto cfg = s.write("mc.json", R"({"c": 2.0, "rabi_MHz": 5, "length_us": 0.1, "detuning_MHz": [0],
      "estimator": "montecarlo", "n_samples": 5000, "seed": 3})");
  REQUIRE(run_cmd("deer-spectrum", cfg, s.path("a.csv")).code == 0);
  REQUIRE(run_cmd("deer-spectrum", cfg, s.path("b.csv"), {"--seed", "4"}).code == 0);
  CHECK(slurp(s.path("a.csv")).find("# seed: 3\n") != std::string::npos);
  CHECK(slurp(s.path("b.csv")).find("# seed: 4\n") != std::string::npos);
  CHECK(csv_rows(slurp(s.path("a.csv")))[0][1] != csv_rows(slurp(s.path("b.csv")))[0][1]);
}

TEST_CASE("config echo reruns to the same output") {
  Scratch s;
  struct Case {
    std::string cmd, config;
    std::vector<std::string> extra;
  };
  const std::vector<Case> cases = {
      {"deer-spectrum", spectrum_config, {}},
      {"deer-rabi", R"({"n_c2": 9, "rabi_MHz": 5, "length_us": [0, 0.05, 0.1], "estimator": "montecarlo",
          "n_samples": 5000})", {"--mode", "ensemble", "--seed", "11"}},
      {"epr", epr_config, {}},
      {"fit", fit_config, {}},
  };
  int k = 0;
  for (const auto& c : cases) {
    CAPTURE(c.cmd);
    const auto first = s.path("first" + std::to_string(k) + ".csv");
    REQUIRE(run_cmd(c.cmd, s.write("in" + std::to_string(k) + ".json", c.config), first, c.extra).code == 0);
    const std::string text = slurp(first);
    const auto echo = s.write("echo" + std::to_string(k) + ".json", config_echo(text));
    const auto second = s.path("second" + std::to_string(k) + ".csv");
    REQUIRE(run_cmd(c.cmd, echo, second).code == 0);
    CHECK(slurp(second) == text);
    ++k;
  }

  // JSON report: the embedded config reruns to the same report
  REQUIRE(run_cmd("volume", s.write("v.json", volume_config), s.path("v1.json")).code == 0);
  const std::string report = slurp(s.path("v1.json"));
  const auto echo = s.write("v_echo.json", json::parse(report)["config"].dump());
  REQUIRE(run_cmd("volume", echo, s.path("v2.json")).code == 0);
  CHECK(slurp(s.path("v2.json")) == report);
}
