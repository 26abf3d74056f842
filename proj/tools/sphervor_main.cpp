#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sphervor/errors.hpp"
#include "sphervor/fastsv.hpp"
#include "sphervor/fitter.hpp"
#include "sphervor/image_io.hpp"
#include "sphervor/parallel.hpp"
#include "sphervor/probes.hpp"
#include "sphervor/shading.hpp"
#include "sphervor/targets.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sphervor;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitDiverged = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (const auto& t : split(s, ',')) {
    try {
      out.push_back(std::stoi(t));
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": bad integer '" + t + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& t : split(s, ',')) {
    try {
      out.push_back(std::stod(t));
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": bad number '" + t + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

Vec3 parse_vec3(const std::string& s, const char* what) {
  auto v = parse_double_list(s, what);
  if (v.size() != 3) throw UsageError(std::string(what) + ": need three numbers");
  return Vec3(v[0], v[1], v[2]);
}

std::string default_out_dir() {
  const char* env = std::getenv("SPHERVOR_OUT");
  return env && *env ? env : "out";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write " + path);
  os << body;
}

void write_json_file(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Applies a value from run.json when the flag was not given on the command line.
template <class T>
void cfg_take(CLI::App* sub, const json& cfg, const std::string& key, T& var) {
  if (cfg.contains(key) && sub->count("--" + key) == 0) var = cfg.at(key).get<T>();
}

json load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path);
  try {
    json j;
    is >> j;
    return j;
  } catch (const std::exception& e) {
    throw UsageError("bad config " + path + ": " + e.what());
  }
}

// ---- shared loaders ----

SampleSet load_target(const std::string& spec, int samples, uint64_t seed) {
  if (samples < 1) throw UsageError("--samples must be positive");
  if (spec.rfind("builtin:", 0) == 0) {
    BuiltinTarget t = builtin_target(spec.substr(8));
    return sample_target(t, samples, true, seed);
  }
  ImageBuffer img = read_pfm(spec);
  if (img.width != 2 * img.height)
    throw UsageError("--target PFM must be equirect (width == 2*height): " + spec);
  SampleSet data = sample_equirect(EquirectMap(std::move(img)), samples, true, seed);
  data.source = spec;
  return data;
}

SvTauMode parse_mode(const std::string& mode) {
  if (mode == "explicit") return SvTauMode::Explicit;
  if (mode == "norm") return SvTauMode::Norm;
  throw UsageError("--mode must be explicit or norm, got '" + mode + "'");
}

BasisKind parse_basis(const std::string& basis) {
  if (basis == "sh") return BasisKind::Sh;
  if (basis == "sg") return BasisKind::Sg;
  if (basis == "sb") return BasisKind::Sb;
  if (basis == "sv") return BasisKind::Sv;
  throw UsageError("--basis must be one of sh|sg|sb|sv, got '" + basis + "'");
}

SphericalModel build_model(BasisKind kind, int size, SvTauMode mode, int channels) {
  switch (kind) {
    case BasisKind::Sh: return make_sh(size, channels);
    case BasisKind::Sg: return make_sg(size, channels);
    case BasisKind::Sb: return make_sb(size, channels);
    case BasisKind::Sv: return make_sv(size, channels, mode);
  }
  throw UsageError("unreachable basis kind");
}

void write_loss_csv(const std::string& path, const std::vector<double>& trace) {
  std::string body = "iter,loss\n";
  for (size_t i = 0; i < trace.size(); ++i)
    body += std::to_string(i) + "," + fmt_g(trace[i]) + "\n";
  write_text(path, body);
}

void write_preview(const SphericalModel& m, const std::string& stem, int height) {
  EquirectMap eq = render_equirect(m, height);
  write_pfm(stem + ".pfm", eq.img());
  write_ppm(stem + ".ppm", eq.img());
}

// Loads a probe field; the far-field cubemap is looked up as <stem>_far.pfm
// next to the probe file unless an explicit envmap replaces it later.
ProbeField load_probes_arg(const std::string& path) {
  std::string far;
  std::string stem = path;
  if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".txt")
    stem = stem.substr(0, stem.size() - 4);
  if (fs::exists(stem + "_far.pfm")) far = stem + "_far.pfm";
  return load_probe_field(path, far);
}

CubeMap load_envmap(const std::string& path, int env_res) {
  ImageBuffer img = read_pfm(path);
  if (img.width > 0 && img.height == 6 * img.width) return read_cubemap_pfm(path);
  if (img.width == 2 * img.height)
    return cubemap_from_equirect(EquirectMap(std::move(img)), env_res);
  throw UsageError("--envmap must be a stacked cubemap (h==6w) or equirect (w==2h): " +
                   path);
}

// ---- fit ----

struct FitFlags {
  std::string target, basis = "sv", mode = "explicit";
  int size = 8, iters = 2000, samples = 5000, preview_height = 128;
  double lr = 1e-2;
};

int cmd_fit(const FitFlags& f, const std::string& out_dir, uint64_t seed, json& run) {
  if (f.target.empty()) throw UsageError("fit: --target is required");
  if (f.size < (f.basis == "sh" ? 0 : 1)) throw UsageError("fit: bad --size");
  if (f.iters < 0 || !(f.lr > 0)) throw UsageError("fit: bad --iters/--lr");
  SampleSet data = load_target(f.target, f.samples, seed);
  SphericalModel init = build_model(parse_basis(f.basis), f.size, parse_mode(f.mode),
                                    data.channels());
  std::mt19937_64 rng(splitmix64(seed, 0));
  randomize_model(init, rng);

  FitConfig fc;
  fc.iterations = f.iters;
  fc.step_size = f.lr;
  fc.seed = seed;

  FitReport rep;
  int code = kExitOk;
  try {
    rep = fit(init, data, fc);
  } catch (const DivergedError& e) {
    rep = e.last;
    code = kExitDiverged;
    std::fprintf(stderr, "fit diverged at iteration %d; writing last finite state\n",
                 rep.iterations);
  }
  save_model(rep.model, out_dir + "/model.txt");
  write_loss_csv(out_dir + "/loss.csv", rep.loss_trace);
  write_preview(rep.model, out_dir + "/preview", f.preview_height);
  write_json_file(out_dir + "/run.json", run);
  std::printf("final_loss=%s\nfinal_psnr_db=%.6f\n", fmt_g(rep.final_loss).c_str(),
              rep.final_psnr);
  std::fprintf(stderr, "wall_ms=%.1f\n", rep.wall_ms);
  return code;
}

// ---- restarts ----

struct RestartFlags {
  std::string target = "builtin:cells4", bases = "sv,sg,sb", mode = "norm";
  int params_budget = 48, restarts = 100, iters = 1500, samples = 2000;
  double lr = 0.05;
};

ImageBuffer histogram_image(const std::vector<std::vector<double>>& series) {
  const int bins = 72, bar_w = 5, row_h = 48, bar_h = 40;
  const int W = bins * bar_w, H = row_h * (int)series.size();
  ImageBuffer img(W, H, 3, 1.0);
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series)
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double colors[4][3] = {
      {0.85, 0.25, 0.2}, {0.2, 0.6, 0.25}, {0.25, 0.35, 0.85}, {0.4, 0.4, 0.4}};
  for (size_t b = 0; b < series.size(); ++b) {
    std::vector<int> counts(bins, 0);
    for (double v : series[b]) {
      int bin = std::clamp((int)((v - lo) / (hi - lo) * bins), 0, bins - 1);
      counts[bin]++;
    }
    int maxc = *std::max_element(counts.begin(), counts.end());
    if (maxc == 0) continue;
    const double* col = colors[b % 4];
    for (int bin = 0; bin < bins; ++bin) {
      int h = (int)std::lround(double(bar_h) * counts[bin] / maxc);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < bar_w; ++x) {
          double* px = img.at(bin * bar_w + x, (int)b * row_h + row_h - 2 - y);
          px[0] = col[0];
          px[1] = col[1];
          px[2] = col[2];
        }
    }
  }
  return img;
}

int cmd_restarts(const RestartFlags& f, const std::string& out_dir, uint64_t seed,
                 int threads, json& run) {
  if (f.restarts < 1) throw UsageError("restarts: --restarts must be positive");
  if (f.params_budget < 1) throw UsageError("restarts: --params-budget must be positive");
  SampleSet data = load_target(f.target, f.samples, seed);
  SvTauMode mode = parse_mode(f.mode);
  auto basis_names = split(f.bases, ',');
  if (basis_names.empty()) throw UsageError("restarts: --bases is empty");

  FitConfig fc;
  fc.iterations = f.iters;
  fc.step_size = f.lr;
  fc.seed = seed;

  json summary = json::object();
  std::vector<std::vector<double>> psnr_series;
  std::vector<std::pair<std::string, double>> medians;
  for (const auto& name : basis_names) {
    BasisKind kind = parse_basis(name);
    int size = matched_size(kind, mode, data.channels(), f.params_budget);
    SphericalModel shape = build_model(kind, size, mode, data.channels());
    RestartSummary rs = restart_experiment(shape, data, fc, f.restarts, threads);

    std::string csv = "restart,seed,final_psnr,final_loss,diverged\n";
    std::vector<double> psnrs;
    int diverged = 0;
    for (const auto& r : rs.records) {
      csv += std::to_string(r.restart) + "," + std::to_string(r.seed) + "," +
             fmt_g(r.final_psnr) + "," + fmt_g(r.final_loss) + "," +
             (r.diverged ? "1" : "0") + "\n";
      psnrs.push_back(r.final_psnr);
      diverged += r.diverged ? 1 : 0;
    }
    write_text(out_dir + "/restarts_" + name + ".csv", csv);
    summary[name] = {{"size", size},
                     {"params", param_count(shape)},
                     {"median_psnr", rs.median_psnr},
                     {"mean_psnr", rs.mean_psnr},
                     {"stddev_psnr", rs.stddev_psnr},
                     {"min_psnr", rs.min_psnr},
                     {"max_psnr", rs.max_psnr},
                     {"restarts", f.restarts},
                     {"diverged", diverged}};
    psnr_series.push_back(std::move(psnrs));
    medians.emplace_back(name, rs.median_psnr);
  }
  write_json_file(out_dir + "/summary.json", summary);
  write_ppm(out_dir + "/histogram.ppm", histogram_image(psnr_series));
  write_json_file(out_dir + "/run.json", run);

  std::string line = "median_psnr";
  for (const auto& [name, med] : medians) line += " " + name + "=" + fmt_short(med);
  std::stable_sort(medians.begin(), medians.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::string order = "ordering=";
  for (size_t i = 0; i < medians.size(); ++i)
    order += (i ? ">" : "") + medians[i].first;
  std::printf("%s\n%s\n", line.c_str(), order.c_str());
  return kExitOk;
}

// ---- render ----

struct RenderFlags {
  std::string scene = "builtin:mirrorsphere", probes = "none", envmap, tau_sweep;
  int env_res = 64;
  double tau = -1.0;
};

int cmd_render(const RenderFlags& f, const std::string& out_dir, json& run) {
  AnalyticScene scene = f.scene.rfind("builtin:", 0) == 0
                            ? builtin_scene(f.scene.substr(8))
                            : load_scene(f.scene);
  if (scene.cameras.empty()) throw UsageError("render: scene has no cameras");

  ProbeField field;
  if (f.probes != "none" && !f.probes.empty()) field = load_probes_arg(f.probes);
  if (!f.envmap.empty()) field.far_field = load_envmap(f.envmap, f.env_res);

  std::vector<double> taus;
  if (!f.tau_sweep.empty()) taus = parse_double_list(f.tau_sweep, "--tau-sweep");
  else if (f.tau >= 0.0) taus.push_back(f.tau);

  int n_images = 0;
  for (size_t ci = 0; ci < scene.cameras.size(); ++ci) {
    const Camera& cam = scene.cameras[ci];
    GBuffer gbuf = raytrace_gbuffer(scene, cam);
    char view[32];
    std::snprintf(view, sizeof view, "view%03zu", ci);
    if (taus.empty()) {
      ImageBuffer img = shade(gbuf, cam, field);
      write_pfm(out_dir + "/" + view + ".pfm", img);
      write_ppm(out_dir + "/" + view + ".ppm", img);
      ++n_images;
    } else {
      for (double t : taus) {
        if (t < 0) throw UsageError("--tau-sweep: temperatures must be >= 0");
        ImageBuffer img = shade(gbuf, cam, field, t);
        std::string stem = out_dir + "/render_tau" + fmt_short(t);
        if (scene.cameras.size() > 1) stem += std::string("_") + view;
        write_pfm(stem + ".pfm", img);
        write_ppm(stem + ".ppm", img);
        ++n_images;
      }
    }
  }
  write_json_file(out_dir + "/run.json", run);
  std::printf("images=%d\n", n_images);
  return kExitOk;
}

// ---- bench ----

struct BenchFlags {
  int sites = 2048, dirs = 20000, probes_count = 128, queries = 4000;
  double tau = 1500.0;
  std::string res_list = "4,8,16", m_list = "2,4,8,2048", knn_list = "8,16,32";
};

int cmd_bench(const BenchFlags& f, const std::string& out_dir, uint64_t seed, json& run) {
  if (f.sites < 1 || f.dirs < 1) throw UsageError("bench: bad --sites/--dirs");
  auto res_list = parse_int_list(f.res_list, "--res-list");
  auto m_list = parse_int_list(f.m_list, "--m-list");
  auto knn_list = parse_int_list(f.knn_list, "--knn-list");

  SphericalModel model = make_sv(f.sites, 3, SvTauMode::Explicit, f.tau);
  SvParams& p = std::get<SvParams>(model.params);
  std::mt19937_64 rng(splitmix64(seed, 0));
  std::normal_distribution<double> val(0.0, 0.5);
  for (int k = 0; k < f.sites; ++k)
    for (int c = 0; c < 3; ++c) p.values(k, c) = val(rng);

  std::vector<BenchConfig> cfgs;
  for (int res : res_list)
    for (int m : m_list) {
      if (m < 1 || m > f.sites)
        throw UsageError("bench: --m-list entries must be in [1, sites]");
      cfgs.push_back({res, m});
    }
  double full_rate = 0.0;
  auto rows = bench_eval(p, cfgs, f.dirs, seed, &full_rate);

  std::string err_csv = "res,m,max_err,mean_err\n";
  std::string time_csv = "res,m,evals_per_sec\n";
  for (const auto& r : rows) {
    err_csv += std::to_string(r.face_res) + "," + std::to_string(r.m) + "," +
               fmt_g(r.max_err) + "," + fmt_g(r.mean_err) + "\n";
    time_csv += std::to_string(r.face_res) + "," + std::to_string(r.m) + "," +
                fmt_g(r.evals_per_sec) + "\n";
  }
  write_text(out_dir + "/bench.csv", err_csv);

  // Probe-interpolation throughput across kNN sizes.
  std::mt19937_64 prng(splitmix64(seed, 7));
  std::uniform_real_distribution<double> pos(-1.5, 1.5);
  ProbeField pf;
  for (int i = 0; i < f.probes_count; ++i) {
    LightProbe pr;
    for (int c = 0; c < 3; ++c) pr.position[c] = pos(prng);
    SphericalModel sv = make_sv(8, 3, SvTauMode::Explicit, 5.0);
    randomize_model(sv, prng);
    pr.sv = std::get<SvParams>(sv.params);
    pf.probes.push_back(std::move(pr));
  }
  std::vector<Vec3> qp(f.queries);
  std::vector<UnitDir> qd(f.queries);
  for (int i = 0; i < f.queries; ++i) {
    for (int c = 0; c < 3; ++c) qp[i][c] = pos(prng);
    qd[i] = uniform_dir(prng);
  }
  std::string knn_csv = "knn,queries_per_sec\n";
  double sink = 0.0;
  for (int k : knn_list) {
    if (k < 1 || k > f.probes_count)
      throw UsageError("bench: --knn-list entries must be in [1, probes-count]");
    pf.knn_k = k;
    for (int i = 0; i < std::min(f.queries, 64); ++i)
      sink += near_field(pf, qp[i], qd[i], 50.0).alpha;  // warm up
    auto t0 = std::chrono::steady_clock::now();
    int reps = 0;
    double elapsed = 0.0;
    do {
      for (int i = 0; i < f.queries; ++i)
        sink += near_field(pf, qp[i], qd[i], 50.0).color[0];
      ++reps;
      elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    } while (elapsed < 0.25);
    knn_csv += std::to_string(k) + "," + fmt_g(double(reps) * f.queries / elapsed) + "\n";
  }
  if (!std::isfinite(sink)) std::fprintf(stderr, "bench: non-finite sink\n");
  write_text(out_dir + "/knn_bench.csv", knn_csv);
  time_csv += "full," + std::to_string(f.sites) + "," + fmt_g(full_rate) + "\n";
  write_text(out_dir + "/timing.csv", time_csv);
  write_json_file(out_dir + "/run.json", run);
  std::printf("bench_rows=%zu\n", rows.size());
  std::fprintf(stderr, "full_evals_per_sec=%s\n", fmt_g(full_rate).c_str());
  return kExitOk;
}

// ---- probe_fit ----

struct ProbeFitFlags {
  std::string scene = "builtin:proberoom", probes_init = "random:16", refs;
  std::string aabb_min = "-1.5,-1.5,-1.5", aabb_max = "1.5,1.5,1.5";
  int iters = 2000, knn = 8, sites = 8, env_res = 16, log_every = 50;
  double lr = 0.02;
};

int cmd_probe_fit(const ProbeFitFlags& f, const std::string& out_dir, uint64_t seed,
                  json& run) {
  if (f.refs.empty()) throw UsageError("probe_fit: --refs is required");
  AnalyticScene scene = f.scene.rfind("builtin:", 0) == 0
                            ? builtin_scene(f.scene.substr(8))
                            : load_scene(f.scene);
  std::vector<Camera> cams;
  if (fs::exists(f.refs + "/cameras.txt"))
    cams = load_scene(f.refs + "/cameras.txt").cameras;
  else
    cams = scene.cameras;
  if (cams.empty()) throw UsageError("probe_fit: no cameras (refs/cameras.txt or scene)");

  std::vector<ImageBuffer> refs;
  for (size_t i = 0; i < cams.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "/view%03zu.pfm", i);
    refs.push_back(read_pfm(f.refs + name));
  }

  ProbeField init;
  if (f.probes_init.rfind("random:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(f.probes_init.substr(7));
    } catch (const std::exception&) {
      throw UsageError("probe_fit: bad --probes-init '" + f.probes_init + "'");
    }
    init = init_probe_field(n, f.sites, f.knn, parse_vec3(f.aabb_min, "--aabb-min"),
                            parse_vec3(f.aabb_max, "--aabb-max"), f.env_res,
                            splitmix64(seed, 1));
  } else {
    init = load_probes_arg(f.probes_init);
  }

  FitConfig fc;
  fc.iterations = f.iters;
  fc.step_size = f.lr;
  fc.seed = seed;
  fc.log_every = f.log_every;

  ensure_dir(out_dir + "/checkpoints");
  std::string ckpt_csv = "iter,loss\n";
  auto checkpoint = [&](int iter, const ProbeField& field, double loss) {
    char name[48];
    std::snprintf(name, sizeof name, "/checkpoints/iter%06d.txt", iter);
    save_probe_field(field, out_dir + name);
    ckpt_csv += std::to_string(iter) + "," + fmt_g(loss) + "\n";
  };

  ProbeFitReport rep;
  int code = kExitOk;
  try {
    rep = fit_probe_scene(scene, cams, refs, init, fc, checkpoint);
  } catch (const ProbeDivergedError& e) {
    rep = e.last;
    code = kExitDiverged;
    std::fprintf(stderr, "probe fit diverged at iteration %d; writing last finite state\n",
                 rep.iterations);
  }

  save_probe_field(rep.field, out_dir + "/probes.txt", out_dir + "/probes_far.pfm");
  write_loss_csv(out_dir + "/loss.csv", rep.loss_trace);
  write_text(out_dir + "/checkpoints.csv", ckpt_csv);
  std::string alpha_csv = "checkpoint,mean_alpha\n";
  for (size_t i = 0; i < rep.mean_alpha_trace.size(); ++i)
    alpha_csv += std::to_string(i) + "," + fmt_g(rep.mean_alpha_trace[i]) + "\n";
  write_text(out_dir + "/mean_alpha.csv", alpha_csv);
  for (size_t i = 0; i < cams.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "/final_view%03zu", i);
    ImageBuffer img = shade(raytrace_gbuffer(scene, cams[i]), cams[i], rep.field);
    write_pfm(out_dir + name + ".pfm", img);
    write_ppm(out_dir + name + ".ppm", img);
  }
  write_json_file(out_dir + "/run.json", run);
  std::printf("final_loss=%s\nfinal_psnr_db=%.6f\n", fmt_g(rep.final_loss).c_str(),
              rep.final_psnr);
  std::fprintf(stderr, "wall_ms=%.1f\n", rep.wall_ms);
  return code;
}

// Loads --config (if present) and, when no subcommand was named on the command
// line, injects the one recorded in the config.
json prescan_config(std::vector<std::string>& args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return json::object();
  json cfg = load_run_config(path);
  if (cfg.contains("command")) {
    static const char* names[] = {"fit", "restarts", "render", "bench", "probe_fit"};
    bool has = false;
    for (const auto& a : args)
      for (const char* n : names)
        if (a == n) has = true;
    if (!has) args.insert(args.begin(), cfg["command"].get<std::string>());
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  json cfg;
  try {
    cfg = prescan_config(args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  CLI::App app{"spherical function approximation toolkit"};
  app.require_subcommand(0, 1);
  uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = default_out_dir(), config_path;
  app.add_option("--config", config_path, "run.json from a previous run");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "RNG seed");
    sub->add_option("--threads", threads, "worker threads (0 = hardware)");
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--config", config_path, "run.json from a previous run");
  };

  FitFlags ff;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one basis to a target");
  add_common(fit_cmd);
  fit_cmd->add_option("--target", ff.target, "builtin:NAME or equirect PFM path");
  fit_cmd->add_option("--basis", ff.basis, "sh|sg|sb|sv");
  fit_cmd->add_option("--size", ff.size, "SH degree or lobe/site count");
  fit_cmd->add_option("--mode", ff.mode, "sv temperature mode: explicit|norm");
  fit_cmd->add_option("--iters", ff.iters, "optimizer iterations");
  fit_cmd->add_option("--lr", ff.lr, "optimizer step size");
  fit_cmd->add_option("--samples", ff.samples, "training directions");
  fit_cmd->add_option("--preview-height", ff.preview_height, "preview equirect height");

  RestartFlags rf;
  CLI::App* restart_cmd = app.add_subcommand("restarts", "multi-restart fit comparison");
  add_common(restart_cmd);
  restart_cmd->add_option("--target", rf.target, "builtin:NAME or equirect PFM path");
  restart_cmd->add_option("--bases", rf.bases, "comma list of sh|sg|sb|sv");
  restart_cmd->add_option("--params-budget", rf.params_budget, "parameter budget");
  restart_cmd->add_option("--mode", rf.mode, "sv temperature mode");
  restart_cmd->add_option("--restarts", rf.restarts, "independent restarts");
  restart_cmd->add_option("--iters", rf.iters, "iterations per restart");
  restart_cmd->add_option("--lr", rf.lr, "optimizer step size");
  restart_cmd->add_option("--samples", rf.samples, "training directions");

  RenderFlags vf;
  CLI::App* render_cmd = app.add_subcommand("render", "raytrace and shade a scene");
  add_common(render_cmd);
  render_cmd->add_option("--scene", vf.scene, "builtin:NAME or scene file");
  render_cmd->add_option("--probes", vf.probes, "probe file or 'none'");
  render_cmd->add_option("--envmap", vf.envmap, "far-field PFM (cubemap or equirect)");
  render_cmd->add_option("--env-res", vf.env_res, "cubemap face res for equirect input");
  render_cmd->add_option("--tau-sweep", vf.tau_sweep, "comma list of temperatures");
  render_cmd->add_option("--tau", vf.tau, "single temperature override");

  BenchFlags bf;
  CLI::App* bench_cmd = app.add_subcommand("bench", "truncated-eval and kNN throughput");
  add_common(bench_cmd);
  bench_cmd->add_option("--sites", bf.sites, "SV site count");
  bench_cmd->add_option("--tau", bf.tau, "SV temperature");
  bench_cmd->add_option("--res-list", bf.res_list, "index face resolutions");
  bench_cmd->add_option("--m-list", bf.m_list, "candidate counts");
  bench_cmd->add_option("--knn-list", bf.knn_list, "probe kNN sizes");
  bench_cmd->add_option("--dirs", bf.dirs, "evaluation directions");
  bench_cmd->add_option("--probes-count", bf.probes_count, "probes in the kNN sweep");
  bench_cmd->add_option("--queries", bf.queries, "kNN sweep queries");

  ProbeFitFlags pf;
  CLI::App* probe_cmd = app.add_subcommand("probe_fit", "fit probes to references");
  add_common(probe_cmd);
  probe_cmd->add_option("--scene", pf.scene, "builtin:NAME or scene file");
  probe_cmd->add_option("--probes-init", pf.probes_init, "random:N or probe file");
  probe_cmd->add_option("--refs", pf.refs, "directory with viewNNN.pfm + cameras.txt");
  probe_cmd->add_option("--iters", pf.iters, "optimizer iterations");
  probe_cmd->add_option("--lr", pf.lr, "optimizer step size");
  probe_cmd->add_option("--knn", pf.knn, "probes blended per query");
  probe_cmd->add_option("--sites", pf.sites, "SV sites per probe");
  probe_cmd->add_option("--env-res", pf.env_res, "far-field cubemap face res");
  probe_cmd->add_option("--log-every", pf.log_every, "checkpoint cadence");

  std::vector<const char*> cargv;
  cargv.push_back(argv[0]);
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse((int)cargv.size(), cargv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands()[0];
    if (!sub) {
      std::fprintf(stderr, "%s\n", app.help().c_str());
      return kExitUsage;
    }
    cfg_take(sub, cfg, "seed", seed);
    cfg_take(sub, cfg, "threads", threads);
    ensure_dir(out_dir);

    // out-dir is deliberately not recorded: a replayed run writes wherever the
    // replaying invocation points, and the file stays byte-identical across
    // output locations.
    json run;
    run["command"] = sub->get_name();
    run["seed"] = seed;
    run["threads"] = threads;

    if (sub == fit_cmd) {
      cfg_take(sub, cfg, "target", ff.target);
      cfg_take(sub, cfg, "basis", ff.basis);
      cfg_take(sub, cfg, "size", ff.size);
      cfg_take(sub, cfg, "mode", ff.mode);
      cfg_take(sub, cfg, "iters", ff.iters);
      cfg_take(sub, cfg, "lr", ff.lr);
      cfg_take(sub, cfg, "samples", ff.samples);
      cfg_take(sub, cfg, "preview-height", ff.preview_height);
      run["target"] = ff.target;
      run["basis"] = ff.basis;
      run["size"] = ff.size;
      run["mode"] = ff.mode;
      run["iters"] = ff.iters;
      run["lr"] = ff.lr;
      run["samples"] = ff.samples;
      run["preview-height"] = ff.preview_height;
      return cmd_fit(ff, out_dir, seed, run);
    }
    if (sub == restart_cmd) {
      cfg_take(sub, cfg, "target", rf.target);
      cfg_take(sub, cfg, "bases", rf.bases);
      cfg_take(sub, cfg, "params-budget", rf.params_budget);
      cfg_take(sub, cfg, "mode", rf.mode);
      cfg_take(sub, cfg, "restarts", rf.restarts);
      cfg_take(sub, cfg, "iters", rf.iters);
      cfg_take(sub, cfg, "lr", rf.lr);
      cfg_take(sub, cfg, "samples", rf.samples);
      run["target"] = rf.target;
      run["bases"] = rf.bases;
      run["params-budget"] = rf.params_budget;
      run["mode"] = rf.mode;
      run["restarts"] = rf.restarts;
      run["iters"] = rf.iters;
      run["lr"] = rf.lr;
      run["samples"] = rf.samples;
      return cmd_restarts(rf, out_dir, seed, threads, run);
    }
    if (sub == render_cmd) {
      cfg_take(sub, cfg, "scene", vf.scene);
      cfg_take(sub, cfg, "probes", vf.probes);
      cfg_take(sub, cfg, "envmap", vf.envmap);
      cfg_take(sub, cfg, "env-res", vf.env_res);
      cfg_take(sub, cfg, "tau-sweep", vf.tau_sweep);
      cfg_take(sub, cfg, "tau", vf.tau);
      run["scene"] = vf.scene;
      run["probes"] = vf.probes;
      run["envmap"] = vf.envmap;
      run["env-res"] = vf.env_res;
      run["tau-sweep"] = vf.tau_sweep;
      run["tau"] = vf.tau;
      return cmd_render(vf, out_dir, run);
    }
    if (sub == bench_cmd) {
      cfg_take(sub, cfg, "sites", bf.sites);
      cfg_take(sub, cfg, "tau", bf.tau);
      cfg_take(sub, cfg, "res-list", bf.res_list);
      cfg_take(sub, cfg, "m-list", bf.m_list);
      cfg_take(sub, cfg, "knn-list", bf.knn_list);
      cfg_take(sub, cfg, "dirs", bf.dirs);
      cfg_take(sub, cfg, "probes-count", bf.probes_count);
      cfg_take(sub, cfg, "queries", bf.queries);
      run["sites"] = bf.sites;
      run["tau"] = bf.tau;
      run["res-list"] = bf.res_list;
      run["m-list"] = bf.m_list;
      run["knn-list"] = bf.knn_list;
      run["dirs"] = bf.dirs;
      run["probes-count"] = bf.probes_count;
      run["queries"] = bf.queries;
      return cmd_bench(bf, out_dir, seed, run);
    }
    if (sub == probe_cmd) {
      cfg_take(sub, cfg, "scene", pf.scene);
      cfg_take(sub, cfg, "probes-init", pf.probes_init);
      cfg_take(sub, cfg, "refs", pf.refs);
      cfg_take(sub, cfg, "iters", pf.iters);
      cfg_take(sub, cfg, "lr", pf.lr);
      cfg_take(sub, cfg, "knn", pf.knn);
      cfg_take(sub, cfg, "sites", pf.sites);
      cfg_take(sub, cfg, "env-res", pf.env_res);
      cfg_take(sub, cfg, "log-every", pf.log_every);
      run["scene"] = pf.scene;
      run["probes-init"] = pf.probes_init;
      run["refs"] = pf.refs;
      run["iters"] = pf.iters;
      run["lr"] = pf.lr;
      run["knn"] = pf.knn;
      run["sites"] = pf.sites;
      run["env-res"] = pf.env_res;
      run["log-every"] = pf.log_every;
      return cmd_probe_fit(pf, out_dir, seed, run);
    }
    std::fprintf(stderr, "error: unknown subcommand\n");
    return kExitUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fatal: %s\n", e.what());
    return 1;
  }
}
