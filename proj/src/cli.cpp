// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "drdt3/binary_io.hpp"
#include "drdt3/checks.hpp"
#include "drdt3/config.hpp"
#include "drdt3/envdata.hpp"
#include "drdt3/errors.hpp"
#include "drdt3/policy.hpp"
#include "drdt3/training.hpp"

namespace drdt3::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataArgs {
  std::string env;
  std::string tier;
  std::size_t n_traj = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string jsonl;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  const auto store = envdata::generate_dataset(a.env, a.tier, a.n_traj, a.seed);
  envdata::save_store(store, a.out);
  if (!a.jsonl.empty()) envdata::export_jsonl(store, a.jsonl);
  const auto& st = store.stats();
  const auto best = envdata::best_episode_return(store);
  out << "wrote " << store.size() << " trajectories to " << a.out << "\n";
  out << "count: " << st.count << "\n";
  out << "mean return: " << fmt("%.6g", st.mean_return) << "\n";
  out << "best return: " << (best ? fmt("%.6g", *best) : std::string("n/a")) << "\n";
  if (!best || *best != st.best_return) {
    // teleported segments score higher than any full episode
    out << "best segment return: " << fmt("%.6g", st.best_return) << "\n";
  }
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::string> set;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool resume = false;
};

struct RunPaths {
  fs::path dir;
  fs::path bundle() const { return dir / "bundle.bin"; }
  fs::path state() const { return dir / "trainer_state.bin"; }
  fs::path updates() const { return dir / "train_metrics.csv"; }
  fs::path epochs() const { return dir / "eval_metrics.csv"; }
  fs::path config() const { return dir / "config.txt"; }
  fs::path manifest() const { return dir / "run_manifest.json"; }
};

void write_manifest(const RunPaths& p, const std::string& run_id, const std::string& started,
                    const TrainConfig& c, const std::string& data, const training::Trainer& tr,
                    const std::string& status) {
  nlohmann::ordered_json m;
  m["run_id"] = run_id;
  m["started_at"] = started;
  m["updated_at"] = utc_now();
  m["status"] = status;
  m["config_hash"] = config_hash(c);
  m["seed"] = c.seed;
  m["epochs_completed"] = tr.epoch();
  m["updates_completed"] = tr.update();
  m["dt_baseline"] = c.dt_mode;
  m["paths"] = {{"dataset", fs::absolute(data).string()},
                {"config", fs::absolute(p.config()).string()},
                {"bundle", fs::absolute(p.bundle()).string()},
                {"trainer_state", fs::absolute(p.state()).string()},
                {"train_metrics", fs::absolute(p.updates()).string()},
                {"eval_metrics", fs::absolute(p.epochs()).string()}};
  io::write_file_atomic(p.manifest(), m.dump(2) + "\n");
}

void checkpoint(const RunPaths& p, const training::Trainer& tr) {
  save_bundle(tr.bundle(), p.bundle());
  io::write_file_atomic(p.state(), tr.serialize_state());
  io::write_file_atomic(p.updates(), tr.log().updates_csv());
  io::write_file_atomic(p.epochs(), tr.log().epochs_csv());
}

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig c = a.config.empty() ? TrainConfig{} : load_config(a.config);
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed_given) c.seed = a.seed;
  c.validate();

  const auto store = envdata::load_store(a.data);
  RunPaths p{a.out};
  fs::create_directories(p.dir);

  training::Trainer tr(c, store);
  std::string run_id, started = utc_now();
  if (a.resume) {
    if (!fs::exists(p.bundle()) || !fs::exists(p.state())) {
      throw ArgumentError("--resume: no checkpoint in " + p.dir.string());
    }
    tr.restore(load_bundle(p.bundle()), io::read_file(p.state()));
    if (fs::exists(p.manifest())) {
      try {
        const auto m = nlohmann::json::parse(io::read_file(p.manifest()));
        run_id = m.value("run_id", "");
        started = m.value("started_at", started);
      } catch (const nlohmann::json::exception&) {
        // a damaged manifest is rewritten below
      }
    }
    out << "resumed at epoch " << tr.epoch() << " (update " << tr.update() << ")\n";
  }
  if (run_id.empty()) {
    std::string stamp = started;
    stamp.erase(std::remove_if(stamp.begin(), stamp.end(),
                               [](char ch) { return ch == '-' || ch == ':'; }),
                stamp.end());
    run_id = config_hash(c).substr(0, 12) + "-" + stamp;
  }
  io::write_file_atomic(p.config(), serialize_config(c));
  write_manifest(p, run_id, started, c, a.data, tr, "running");

  try {
    while (!tr.finished()) {
      const auto& e = tr.run_epoch();
      const auto& u = tr.log().updates.back();
      checkpoint(p, tr);
      write_manifest(p, run_id, started, c, a.data, tr, tr.finished() ? "completed" : "running");
      out << "epoch " << e.epoch << "/" << c.epochs << "  update " << u.update
          << "  l_total " << fmt("%.5f", u.l_total) << "  l_diff " << fmt("%.5f", u.l_diff)
          << "  l_dt3 " << fmt("%.5f", u.l_dt3);
      if (c.eval_episodes > 0) {
        out << "  return " << fmt("%.3f", e.mean_return) << "  success "
            << fmt("%.2f", e.success_rate) << "  score " << fmt("%.1f", e.norm_score);
      }
      out << "\n";
    }
  } catch (const NonFiniteError& e) {
    write_manifest(p, run_id, started, c, a.data, tr, "aborted");
    err << "error: " << e.what() << "\n";
    if (tr.epoch() == 0) {
      err << "no checkpoint was written\n";
    } else {
      err << "last good checkpoint: epoch " << tr.epoch() << " in " << p.dir.string() << "\n";
    }
    return kExitAbort;
  }
  out << "bundle: " << p.bundle().string() << (c.dt_mode ? " (DT baseline)" : "") << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string bundle;
  std::string env;
  std::size_t episodes = 10;
  double eta = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "drdt3";
  std::string out;
};

int eval(const EvalArgs& a, std::ostream& out) {
  const auto bundle = load_bundle(a.bundle);
  const std::string env_id = a.env.empty() ? bundle.env_id : a.env;
  const auto& spec = envdata::env_spec(env_id);
  if (spec.state_dim != bundle.state_dim || spec.action_dim != bundle.action_dim) {
    throw ContractError("bundle expects d_s=" + std::to_string(bundle.state_dim) +
                        ", d_a=" + std::to_string(bundle.action_dim) + " but env " + spec.id +
                        " has d_s=" + std::to_string(spec.state_dim) +
                        ", d_a=" + std::to_string(spec.action_dim));
  }
  if (env_id != bundle.env_id) {
    throw ArgumentError("bundle was trained on " + bundle.env_id + ", not " + env_id);
  }
  EvalConfig ec{a.eta, a.episodes, a.seed, parse_eval_mode(a.mode)};
  const auto summary = evaluate(bundle, ec);
  if (!a.out.empty()) io::write_file_atomic(a.out, eval_csv(summary, spec));
  out << "env: " << env_id << "  mode: " << to_string(ec.mode) << "  episodes: " << a.episodes
      << "  initial rtg: " << fmt("%.6g", summary.episodes.front().initial_rtg) << "\n";
  out << "return: " << fmt("%.4f", summary.mean_return) << " ± " << fmt("%.4f", summary.std_return)
      << "\n";
  out << "success rate: " << fmt("%.3f", summary.success_rate) << "\n";
  out << "normalized score: " << fmt("%.2f", summary.normalized_score) << "\n";
  return kExitOk;
}

// ---- check ------------------------------------------------------------------

int check(const std::string& scope, bool negative_control, std::ostream& out) {
  auto cases = checks::builtin_cases();
  if (negative_control) cases.push_back(checks::corrupted_adjoint_case());
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = checks::run_checks(cases, scope);
  for (const auto& r : report.results) {
    out << (r.passed ? "PASS " : "FAIL ") << "[" << r.scope << "] " << r.name << "  error "
        << fmt("%.3g", r.error) << " (tol " << fmt("%.3g", r.tolerance) << ")";
    if (!r.passed && !r.detail.empty()) out << "  " << r.detail;
    out << "\n";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (const auto* w = report.worst()) {
    out << "worst: [" << w->scope << "] " << w->name << "  error " << fmt("%.3g", w->error);
    if (!w->detail.empty()) out << "  " << w->detail;
    out << "\n";
  }
  std::size_t failed = 0;
  for (const auto& r : report.results) failed += r.passed ? 0 : 1;
  out << report.results.size() - failed << "/" << report.results.size() << " checks passed in "
      << fmt("%.1f", secs) << " s\n";
  return report.passed() ? kExitOk : kExitCheck;
}

// ---- plot -------------------------------------------------------------------

int plot(const std::string& metrics, const std::string& out_path, std::size_t window,
         std::ostream& out) {
  const auto table = parse_numeric_csv(io::read_file(metrics), metrics);
  const std::string svg = render_svg(table, window, fs::path(metrics).filename().string());
  io::write_file_atomic(out_path, svg);
  out << "wrote " << out_path << " (" << table.rows.size() << " rows, window " << window << ")\n";
  return kExitOk;
}

}  // namespace

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw ArgumentError("moving average window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const std::size_t from = t + 1 > window ? t + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t s = from; s <= t; ++s) acc += values[s];
    out[t] = acc / static_cast<double>(t + 1 - from);
  }
  return out;
}

CsvTable parse_numeric_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (t.header.empty()) {
      if (cells.size() < 2) {
        throw FormatError(source + ":" + std::to_string(lineno) +
                          ": header needs an x column and at least one series");
      }
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size()) {
        throw FormatError(source + ":" + std::to_string(lineno) + ": column '" + t.header[c] +
                          "' is not a number: '" + cells[c] + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw FormatError(source + ": empty CSV (no header)");
  return t;
}

std::string render_svg(const CsvTable& table, std::size_t window, const std::string& title) {
  if (table.rows.empty()) throw FormatError(title + ": no data rows to plot");
  const double w = 720, h = 420, left = 70, right = 160, top = 40, bottom = 50;
  const std::size_t ncols = table.header.size();
  std::vector<std::vector<double>> smooth(ncols);
  double xmin = table.rows.front()[0], xmax = xmin, ymin = 1e300, ymax = -1e300;
  for (std::size_t c = 1; c < ncols; ++c) {
    std::vector<double> col;
    for (const auto& r : table.rows) col.push_back(r[c]);
    smooth[c] = moving_average(col, window);
  }
  for (const auto& r : table.rows) {
    xmin = std::min(xmin, r[0]);
    xmax = std::max(xmax, r[0]);
    for (std::size_t c = 1; c < ncols; ++c) {
      if (!std::isfinite(r[c])) continue;
      ymin = std::min(ymin, r[c]);
      ymax = std::max(ymax, r[c]);
    }
  }
  if (ymin > ymax) ymin = ymax = 0.0;
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - ymin) / (ymax - ymin) * (h - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream s;
  char buf[160];
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "viewBox=\"0 0 %g %g\">\n",
                w, h, w, h);
  s << buf;
  s << "<!-- data (raw rows, then moving average window " << window << ")\n";
  for (std::size_t c = 0; c < ncols; ++c) s << (c ? "," : "") << table.header[c];
  s << "\n";
  for (const auto& r : table.rows) {
    for (std::size_t c = 0; c < ncols; ++c) {
      std::snprintf(buf, sizeof buf, "%s%.17g", c ? "," : "", r[c]);
      s << buf;
    }
    s << "\n";
  }
  s << "smoothed\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", table.rows[i][0]);
    s << buf;
    for (std::size_t c = 1; c < ncols; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", smooth[c][i]);
      s << buf;
    }
    s << "\n";
  }
  s << "-->\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">", left);
  s << buf << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
                "stroke=\"#444\"/>\n",
                left, top, w - left - right, h - top - bottom);
  s << buf;
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, xv = xmin + (xmax - xmin) * k / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"end\">%.4g</text>\n",
                  left - 6, py(yv) + 4, yv);
    s << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.4g</text>\n",
                  px(xv), h - bottom + 16, xv);
    s << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                "text-anchor=\"middle\">",
                left + (w - left - right) / 2, h - 12);
  s << buf << table.header[0] << "</text>\n";

  for (std::size_t c = 1; c < ncols; ++c) {
    const char* color = colors[(c - 1) % 6];
    for (int pass = 0; pass < 2; ++pass) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
        << (pass ? "2" : "1") << "\" stroke-opacity=\"" << (pass ? "1" : "0.3") << "\" points=\"";
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const double y = pass ? smooth[c][i] : table.rows[i][c];
        if (!std::isfinite(y)) continue;
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(table.rows[i][0]), py(y));
        s << buf;
      }
      s << "\"/>\n";
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                  "fill=\"%s\">",
                  w - right + 10, top + 16.0 * static_cast<double>(c), color);
    s << buf << table.header[c] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"drdt3: decision TTT with diffusion action refinement", "drdt3"};
  app.require_subcommand(1);

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  gen->add_option("--env", g.env, "pointreach or stitchchain")->required();
  gen->add_option("--tier", g.tier, "medium, medium-replay (pointreach) or stitch (stitchchain)")
      ->required();
  gen->add_option("--n-traj", g.n_traj, "number of trajectories")->capture_default_str();
  gen->add_option("--seed", g.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", g.out, "output trajectory file")->required();
  gen->add_option("--jsonl", g.jsonl, "also export JSON lines here");

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "train a policy bundle");
  tr->add_option("--config", t.config, "key = value config file (defaults when omitted)");
  tr->add_option("--data", t.data, "trajectory file from gen-data")->required();
  tr->add_option("--out", t.out, "run directory")->required();
  tr->add_option("--set", t.set, "override a config key (key=value), repeatable");
  auto* seed_opt = tr->add_option("--seed", t.seed, "override the config seed");
  tr->add_flag("--resume", t.resume, "continue from the checkpoint in --out");

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "evaluate a policy bundle");
  ev->add_option("--bundle", e.bundle, "bundle file")->required();
  ev->add_option("--env", e.env, "environment (defaults to the bundle's)");
  ev->add_option("--episodes", e.episodes, "episodes")->capture_default_str();
  ev->add_option("--eta", e.eta, "initial return-to-go scale")->capture_default_str();
  ev->add_option("--seed", e.seed, "evaluation seed")->capture_default_str();
  ev->add_option("--mode", e.mode, "drdt3 or dt3-only")->capture_default_str();
  ev->add_option("--out", e.out, "per-episode CSV");

  std::string scope = "all";
  bool negative = false;
  auto* ck = app.add_subcommand("check", "run gradient and invariant checks");
  ck->add_option("--scope", scope, "numerics, dt3, diffusion, training or all")
      ->capture_default_str();
  ck->add_flag("--negative-control", negative,
               "add an op with a deliberately wrong adjoint; the run must fail");

  std::string metrics, svg;
  std::size_t window = 10;
  auto* pl = app.add_subcommand("plot", "plot a metrics CSV as SVG");
  pl->add_option("--metrics", metrics, "metrics CSV")->required();
  pl->add_option("--out", svg, "output SVG")->required();
  pl->add_option("--window", window, "moving-average window")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& pe) {
    err << "usage error: " << pe.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return gen_data(g, out);
    if (tr->parsed()) {
      t.seed_given = seed_opt->count() > 0;
      return train(t, out, err);
    }
    if (ev->parsed()) return eval(e, out);
    if (ck->parsed()) return check(scope, negative, out);
    if (pl->parsed()) return plot(metrics, svg, window, out);
  } catch (const NonFiniteError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitAbort;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace drdt3::cli
