#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "nwc/calibrate.hpp"
#include "nwc/config.hpp"
#include "nwc/container.hpp"
#include "nwc/dataset.hpp"
#include "nwc/errors.hpp"

using namespace nwc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nwc");
  std::ostringstream out;
  std::ostringstream err;
  const int code = nwc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nwc_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  }
  return "<missing>";
}

}  // namespace

TEST_CASE("key=value files") {
  const auto kv = KeyValues::parse("# comment\nb=2\n\na=1\n");
  CHECK(kv.get("a") == "1");
  CHECK(kv.to_text() == "a=1\nb=2\n");
  CHECK_THROWS_AS(KeyValues::parse("a=1\na=2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValues::parse("novalue\n"), ConfigError);
  CHECK_THROWS_AS(kv.get("c"), ConfigError);
}

TEST_CASE("resolved configs round trip byte for byte") {
  for (const char* preset : {"desk", "canonical"}) {
    const auto c = preset_config(preset);
    const auto text = resolved_config_text(c);
    const auto back = from_key_values(KeyValues::parse(text));
    CHECK(resolved_config_text(back) == text);
  }
  auto c = preset_config("desk");
  KeyValues o;
  o.set("train.lr", "0.001");
  o.set("source.radar_2km.offsets_min", "-20,-10,0");
  o.set("world.fixed_velocity_km", "2,0");
  apply_overrides(c, o);
  CHECK(c.train.lr == 0.001);
  CHECK(c.dataset.sources[0].timesteps() == 3);
  CHECK(c.dataset.world.fixed_velocity_km->first == 2.0);
  const auto text = resolved_config_text(c);
  CHECK(resolved_config_text(from_key_values(KeyValues::parse(text))) == text);
}

TEST_CASE("config rejects unknown keys and bad values") {
  auto c = preset_config("desk");
  KeyValues bad;
  bad.set("train.learning_rate", "1");
  CHECK_THROWS_AS(apply_overrides(c, bad), ConfigError);
  KeyValues preset;
  preset.set("preset", "canonical");
  CHECK_THROWS_AS(apply_overrides(c, preset), ConfigError);
  KeyValues nan_lr;
  nan_lr.set("train.lr", "fast");
  CHECK_THROWS_AS(apply_overrides(c, nan_lr), ConfigError);
  CHECK_THROWS_AS(preset_config("huge"), ConfigError);
  auto text = resolved_config_text(preset_config("desk"));
  CHECK_THROWS_AS(from_key_values(KeyValues::parse(text + "extra.key=1\n")), ConfigError);
}

TEST_CASE("canonical golden config") {
  const auto golden = slurp(fs::path(NWC_GOLDEN_DIR) / "canonical_resolved_config.txt");
  const auto r = run_cli({"show-config", "--preset", "canonical"});
  REQUIRE(r.code == 0);
  CHECK(r.out == golden);

  // output table
  CHECK(value_of(golden, "target.size_px") == "64");
  CHECK(value_of(golden, "target.resolution_km") == "2");
  // input table, row by row
  struct Row {
    const char* name;
    const char* size;
    const char* res;
    const char* context;
    const char* offsets;
    const char* channels;
  };
  const Row rows[] = {
      {"radar_2km", "288", "2", "112", "-90,-80,-70,-60,-50,-40,-30,-20,-10,0", "1"},
      {"radar_4km", "288", "4", "512", "0", "1"},
      {"satellite_4km", "288", "4", "512", "-30,-15,0", "11"},
      {"gfs_8km", "144", "8", "512", "0", "122"},
      {"gfs_forecast_8km", "144", "8", "512", "60,120,180,240,300,360,420,480", "1"},
      {"xyz_2km", "288", "2", "112", "none", "3"},
      {"minute_2km", "288", "2", "112", "none", "1"},
  };
  for (const auto& row : rows) {
    const std::string p = std::string("source.") + row.name + ".";
    INFO(row.name);
    CHECK(value_of(golden, p + "size_px") == row.size);
    CHECK(value_of(golden, p + "resolution_km") == row.res);
    CHECK(value_of(golden, p + "context_km") == row.context);
    CHECK(value_of(golden, p + "offsets_min") == row.offsets);
    CHECK(value_of(golden, p + "channels") == row.channels);
  }
  const auto c = from_key_values(KeyValues::parse(golden));
  CHECK(c.dataset.target.n_lead() == 48);
  CHECK(c.dataset.target.lead_offsets_min.front() == 10);
  CHECK(c.dataset.target.lead_offsets_min.back() == 480);
  CHECK(c.train.lr == 3e-4);
  CHECK(c.train.weight_decay == 1e-3);
  CHECK(c.train.batch == 28);
  CHECK(c.train.steps_per_epoch == 2000);
  CHECK(c.train.epochs == 50);
  CHECK(c.dataset.schedule.cycle_hours == 200);
  CHECK(c.dataset.schedule.blackout_hours == 12);
}

TEST_CASE("command line contract") {
  CHECK(run_cli({"--version"}).code == 0);
  CHECK(run_cli({"--help"}).code == 0);
  const auto none = run_cli({});
  CHECK(none.code == 1);
  CHECK(none.err.rfind("error: usage:", 0) == 0);
  const auto missing = run_cli({"train", "--out-dir", "x"});
  CHECK(missing.code == 1);
  const auto unknown = run_cli({"show-config", "--set", "model.width=3"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.rfind("error: config:", 0) == 0);
  CHECK(unknown.err.find('\n') == unknown.err.size() - 1);
  const auto nodata = run_cli({"quality-map", "--data", "/nonexistent/nwc", "--out-dir", scratch("q").string()});
  CHECK(nodata.code == 1);
  CHECK(nodata.err.rfind("error: ", 0) == 0);
  CHECK(run_cli({"show-config", "--preset", "desk", "--set", "train.lr=0.01"}).out.find("train.lr=0.01\n") != std::string::npos);
}

TEST_CASE("small end-to-end pipeline") {
  const auto root = scratch("e2e");
  const auto data = root / "data";
  const std::vector<std::string> small{"--set", "dataset.hours=200", "--set", "dataset.train_cap=6", "--set",
                                       "dataset.val_cap=2", "--set", "dataset.test_cap=2"};
  auto gen = std::vector<std::string>{"gen-data", "--seed", "3", "--out-dir", data.string()};
  gen.insert(gen.end(), small.begin(), small.end());
  const auto g = run_cli(gen);
  REQUIRE_MESSAGE(g.code == 0, g.err);
  CHECK(fs::exists(data / "manifest.txt"));
  CHECK(fs::exists(data / "resolved_config.txt"));

  REQUIRE(run_cli({"quality-map", "--data", data.string(), "--out-dir", (root / "q").string()}).code == 0);
  for (const char* f : {"quality.nwc", "mean.pgm", "quality.pgm", "resolved_config.txt"}) CHECK(fs::exists(root / "q" / f));

  const auto t = run_cli({"train", "--data", data.string(), "--out-dir", (root / "m").string(), "--quality",
                      (root / "q" / "quality.nwc").string(), "--epochs", "2", "--steps-per-epoch", "1", "--batch", "2"});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(fs::exists(root / "m" / "model.ckpt"));
  CHECK(slurp(root / "m" / "train_log.csv").rfind("epoch,step,train_loss,val_loss,wall_seconds\n", 0) == 0);
  CHECK(value_of(slurp(root / "m" / "resolved_config.txt"), "train.epochs") == "2");

  const auto c = run_cli({"calibrate", "--data", data.string(), "--model-dir", (root / "m").string(), "--out-dir",
                      (root / "c").string()});
  REQUIRE_MESSAGE(c.code == 0, c.err);
  const auto table = ThresholdTable::load(root / "c" / "thresholds.txt");
  CHECK(table.classes() == 9);
  CHECK(table.n_lead() == 12);

  const auto e = run_cli({"eval", "--data", data.string(), "--model-dir", (root / "m").string(), "--thresholds",
                      (root / "c" / "thresholds.txt").string(), "--out-dir", (root / "e").string(), "--truth"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto csv = slurp(root / "e" / "metrics.csv");
  for (const char* model : {"model,", "persistence,", "advection,", "nwp,", "truth,"}) CHECK(csv.find(std::string("\n") + model) != std::string::npos);
  {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    int truth_rows = 0;
    while (std::getline(in, line)) {
      if (line.rfind("truth,", 0) != 0) continue;
      ++truth_rows;
      const auto last = line.substr(line.rfind(',') + 1);
      const auto fa = std::stoi(line.substr(0, line.rfind(',')).substr(line.substr(0, line.rfind(',')).rfind(',') + 1));
      CHECK(fa == 0);
      CHECK((last == "1" || last == "nan"));
    }
    CHECK(truth_rows == 3 * 12);
  }

  const auto f = run_cli({"forecast", "--data", data.string(), "--model-dir", (root / "m").string(), "--thresholds",
                      (root / "c" / "thresholds.txt").string(), "--out-dir", (root / "f").string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  CHECK(read_nwc1(root / "f" / "forecast.nwc").size() == 12);
  CHECK(fs::exists(root / "f" / "forecast_60min.pgm"));
  CHECK(fs::exists(root / "f" / "observed_120min.pgm"));

  const auto p = run_cli({"plot", "--metrics", (root / "e" / "metrics.csv").string(), "--forecast-dir", (root / "f").string(),
                      "--out-dir", (root / "p").string()});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  CHECK(fs::exists(root / "p" / "csi_0.5mm_h.svg"));
  CHECK(fs::exists(root / "p" / "montage.ppm"));
  CHECK(slurp(root / "p" / "csi_0.5mm_h.svg").find("<svg") != std::string::npos);

  // every command stays inside its output directory
  for (const auto& entry : fs::directory_iterator(root)) {
    CHECK(entry.is_directory());
  }
  fs::remove_all(root);
}
