#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "mlamp/errors.hpp"
#include "mlamp/experiments.hpp"
#include "mlamp/kernels.hpp"

using namespace mlamp;
using namespace mlamp::experiments;
namespace fs = std::filesystem;

namespace {

std::string column(const CsvTable& t, std::size_t row, const std::string& name) {
  return t.rows().at(row).at(t.column_index(name));
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("mlamp_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MLAMP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("presets") {
  const auto slr = ModelConfig::from_preset("slr2");
  const auto s = slr.network();
  REQUIRE(s.depth() == 2);
  CHECK(s.layers[0].channel == ChannelSpec::awgn(1e-8));
  CHECK(s.layers[1].channel == ChannelSpec::awgn(0.0));
  CHECK(s.layers[1].alpha == 1.0);
  CHECK(s.layers[0].alpha == doctest::Approx(0.8));
  CHECK(s.prior == PriorSpec::gauss_bernoulli(0.3));
  CHECK(s.n_signal == 2000);

  const auto per = ModelConfig::from_preset("perceptron2").network();
  CHECK(per.layers[0].channel.kind == ChannelKind::SignWithNoise);
  CHECK(per.layers[1].channel == ChannelSpec::awgn(0.0));
  CHECK(per.prior == PriorSpec::rademacher());

  auto dec = ModelConfig::from_preset("decoder2");
  const auto d = dec.network();
  CHECK(d.layers[0].channel.kind == ChannelKind::Awgn);
  CHECK(d.layers[1].channel.kind == ChannelKind::SignWithNoise);
  CHECK(d.layers[1].alpha == 2.0);
  CHECK(d.layers[0].alpha == doctest::Approx(0.6));

  // overall ratio alpha = alpha1 alpha2
  slr.get("alpha");
  auto m = ModelConfig::from_preset("slr2");
  m.set("alpha2", 2.0);
  m.set("alpha", 0.5);
  CHECK(m.resolved_alpha1() == doctest::Approx(0.25));
  CHECK(m.get("alpha1") == doctest::Approx(0.25));

  dec.single_layer = true;
  const auto one = dec.network();
  REQUIRE(one.depth() == 1);
  CHECK(one.layers[0].alpha == doctest::Approx(0.6));
  CHECK(one.prior == PriorSpec::rademacher());
  auto single = ModelConfig::from_preset("slr2");
  single.single_layer = true;
  CHECK(single.network().layers[0].alpha == doctest::Approx(0.8));
  CHECK(single.network().prior == PriorSpec::gauss_bernoulli(0.3));

  CHECK_THROWS_AS(ModelConfig::from_preset("nope"), ConfigError);
  CHECK_THROWS_AS(m.set("gamma", 1.0), ConfigError);
}

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_config("{}"));
  CHECK_NOTHROW(parse_config(R"({"model": {"preset": "decoder2", "alpha1": 0.44}, "seed": 3})"));
  CHECK_THROWS_AS(parse_config(R"({"modle": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"solver": {"max_iters": 5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"solver": {"max_iter": "five"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"solver": {"damping": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"preset": "slr2", "alpha": 0.5, "alpha1": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"quadrature": {"nodes_per_dim": 2}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sweep": {"axes": [{"param": "alpha", "min": 1, "max": 0.5, "steps": 3}]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sweep": {"axes": [{"param": "alpha", "min": 0.1, "max": 0.5, "steps": 0}]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  const auto explicit_model = parse_config(R"({"model": {"layers": [
      {"channel": "sign", "delta": 0.1, "alpha": 1.2},
      {"channel": "awgn", "delta": 0.0, "alpha": 0.8}],
      "prior": {"kind": "gaussian", "variance": 2.0}, "n": 300}})");
  const auto net = explicit_model.model.network();
  CHECK(net.depth() == 2);
  CHECK(net.layers[0].channel == ChannelSpec::sign(0.1));
  CHECK(net.prior == PriorSpec::gaussian(2.0));
  CHECK(net.n_signal == 300);
}

TEST_CASE("configs round-trip through serialization") {
  for (const char* preset : {"slr2", "perceptron2", "decoder2"}) {
    ExperimentConfig c;
    c.model = ModelConfig::from_preset(preset);
    c.solver.damping = 0.25;
    c.sweep.axes = {{"alpha2", 0.5, 1.5, 3}};
    c.instance.stage_priors = {PriorSpec::gaussian(1.0)};
    c.seed = 12345678901ULL;
    const std::string text = serialize_config(c);
    const auto back = parse_config(text);
    CHECK(back.model == c.model);
    CHECK(back.sweep == c.sweep);
    CHECK(back.instance == c.instance);
    CHECK(back.seed == c.seed);
    CHECK(serialize_config(back) == text);
  }
}

TEST_CASE("default sweep axes") {
  const auto a = default_axes(ModelConfig::from_preset("slr2"));
  REQUIRE(a.size() == 2);
  CHECK(a[0].param == "alpha2");
  CHECK(a[1].param == "alpha");
  CHECK(a[0].steps == 41);
  const auto v = a[1].values();
  CHECK(v.size() == 41);
  CHECK(v.front() == doctest::Approx(0.05));
  CHECK(v.back() == doctest::Approx(1.05));
  CHECK(default_axes(ModelConfig::from_preset("decoder2"))[1].param == "alpha1");
  const SweepAxis single{"alpha", 0.3, 0.3, 1};
  CHECK(single.values() == std::vector<double>{0.3});
}

TEST_CASE("1x1 sweep") {
  ExperimentConfig c;
  c.sweep.axes = {{"alpha", 0.8, 0.8, 1}};
  const auto t = cmd_sweep(c, {false});
  REQUIRE(t.rows().size() == 1);
  CHECK(column(t, 0, "phase") == "easy");
  CHECK(column(t, 0, "status") == "ok");
  CHECK(column(t, 0, "runtime_s") == "NA");
  CHECK(column(t, 0, "alpha2") == "1");
  CHECK(column(t, 0, "amp_mse_instance") == "NA");
  const std::string text = t.render(false);
  CHECK(text.find("timestamp") == std::string::npos);
  // metadata, header, one row
  std::size_t data_lines = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') ++data_lines;
  }
  CHECK(data_lines == 2);
  CHECK(t.render(true).rfind("# timestamp=", 0) == 0);
}

TEST_CASE("sweeps are reproducible and thread-count independent") {
  ExperimentConfig c;
  c.model = ModelConfig::from_preset("decoder2");
  c.model.n = 200;
  c.sweep.axes = {{"alpha2", 1.5, 2.0, 2}, {"alpha1", 0.5, 0.7, 2}};
  c.sweep.instance_every = 3;
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  const std::string serial = cmd_sweep(c, {false}).render(false);
  kernels::set_threads(3);
  const std::string parallel = cmd_sweep(c, {false}).render(false);
  const std::string again = cmd_sweep(c, {false}).render(false);
  kernels::set_threads(saved);
  CHECK(serial == parallel);
  CHECK(parallel == again);
}

TEST_CASE("failing cells become NA rows") {
  ExperimentConfig c;
  c.sweep.axes = {{"rho", 0.0, 0.3, 2}};
  const auto t = cmd_sweep(c, {false});
  REQUIRE(t.rows().size() == 2);
  CHECK(column(t, 0, "status") == "error");
  CHECK(column(t, 0, "se_mse") == "NA");
  CHECK(column(t, 0, "rho") == "0");
  CHECK(column(t, 1, "status") == "ok");
}

TEST_CASE("se, free-energy and instance commands") {
  ExperimentConfig c;
  const auto se = cmd_se(c, {false});
  bool saw_u = false, saw_i = false;
  for (std::size_t r = 0; r < se.rows().size(); ++r) {
    saw_u |= column(se, r, "init") == "uninformed";
    saw_i |= column(se, r, "init") == "informed";
  }
  CHECK(saw_u);
  CHECK(saw_i);

  c.scan = {0.3, 0.3, 11};
  const auto fe = cmd_free_energy(c, {false});
  CHECK(fe.rows().size() == 1);
  CHECK(column(fe, 0, "m_signal") == "0.3");

  const auto inst = cmd_instance(c, {false});
  std::size_t final_rows = 0;
  for (std::size_t r = 0; r < inst.rows().size(); ++r) {
    if (column(inst, r, "record") != "final") continue;
    ++final_rows;
    if (column(inst, r, "layer") == "2") CHECK(std::stod(column(inst, r, "mse")) < 1e-3);
  }
  CHECK(final_rows == 2);

  c.instance.baseline = true;
  c.model = ModelConfig::from_preset("decoder2");
  c.model.n = 300;
  const auto both = cmd_instance(c, {false});
  bool saw_baseline = false;
  for (std::size_t r = 0; r < both.rows().size(); ++r) saw_baseline |= column(both, r, "solver") == "baseline";
  CHECK(saw_baseline);
}

TEST_CASE("selftest command") {
  const auto r = cmd_selftest(20, 3);
  CHECK(r.passed);
  CHECK(r.table.rows().size() == 7);
}

TEST_CASE("csv helpers") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "NA");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "NA");
  CHECK(format_number(std::optional<double>{}) == "NA");
  CHECK(format_bool(true) == "1");
  CsvTable t({"a", "b"});
  CHECK_THROWS(t.add_row({"1"}));
  t.meta("k", "v");
  t.add_row({"1", "2"});
  CHECK(t.render(false) == "# k=v\na,b\n1,2\n");
  CHECK_THROWS(t.column_index("c"));
}

TEST_CASE("command-line contract") {
  const fs::path dir = scratch_dir();
  const fs::path bad = dir / "bad.json", good = dir / "good.json";
  std::ofstream(bad) << R"({"model": {"preset": "slr2", "alhpa": 0.8}})";
  std::ofstream(good) << R"({"model": {"preset": "slr2", "alpha": 0.8}, "sweep": {"axes": [{"param": "alpha", "min": 0.8, "max": 0.8, "steps": 1}]}})";

  const fs::path out = dir / "out.csv";
  CHECK(run_cli("--config " + bad.string() + " --out " + out.string() + " sweep") != 0);
  CHECK_FALSE(fs::exists(out));
  CHECK(run_cli("--config " + (dir / "missing.json").string() + " --out " + out.string() + " se") != 0);
  CHECK_FALSE(fs::exists(out));
  CHECK(run_cli("bogus-command") != 0);

  CHECK(run_cli("--config " + good.string() + " --out " + out.string() + " --no-timestamp sweep") == 0);
  REQUIRE(fs::exists(out));
  const std::string first = read_file(out);
  CHECK(run_cli("--config " + good.string() + " --out " + out.string() + " --no-timestamp --threads 2 sweep") == 0);
  CHECK(read_file(out) == first);
  CHECK(first.find("# command=sweep") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("csv files are replaced whole, devices are written in place") {
  const fs::path dir = scratch_dir();
  const fs::path file = dir / "nested" / "t.csv";
  write_file_atomic(file.string(), "a\n1\n");
  write_file_atomic(file.string(), "b\n2\n");
  CHECK(read_file(file) == "b\n2\n");
  CHECK_FALSE(fs::exists(file.string() + ".tmp"));
  write_file_atomic("/dev/null", "x\n");
  CHECK(fs::is_character_file("/dev/null"));
  fs::remove_all(dir);
}
