#include "cnnconvex/harness.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ccnn {

namespace {

void check_keys(const json& j, const std::string& where,
                const std::vector<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: not an object");
  check_keys(j, "root", {"version", "data", "arch", "arrangements", "solver", "sgd"});
  if (j.value("version", 0) != 1) throw std::invalid_argument("config: unsupported version");
  ExperimentConfig c;
  if (!j.contains("data") || !j.contains("arch"))
    throw std::invalid_argument("config: data and arch sections are required");

  const json& d = j.at("data");
  check_keys(d, "data",
             {"source", "n", "d", "seed", "labels", "class_pos", "class_neg", "images",
              "labels_file", "batch_file", "test_n"});
  c.source = d.value("source", "synthetic");
  c.n = d.at("n").get<int>();
  c.d = d.at("d").get<int>();
  c.data_seed = d.value("seed", 0ull);
  if (d.contains("labels")) c.labels = d.at("labels").get<std::vector<double>>();
  c.class_pos = d.value("class_pos", 0);
  c.class_neg = d.value("class_neg", 1);
  c.images_path = d.value("images", "");
  c.labels_path = d.value("labels_file", "");
  c.batch_path = d.value("batch_file", "");
  c.test_n = d.value("test_n", 0);

  const json& a = j.at("arch");
  check_keys(a, "arch", {"kind", "h", "stride", "L", "m"});
  c.arch = a.at("kind").get<std::string>();
  arch_from_string(c.arch);  // validate
  c.h = a.value("h", 1);
  c.stride = a.value("stride", 1);
  c.L = a.value("L", 3);
  if (a.contains("m")) {
    if (a.at("m").is_array())
      c.m_list = a.at("m").get<std::vector<int>>();
    else
      c.m_list = {a.at("m").get<int>()};
  }

  if (j.contains("arrangements")) {
    const json& r = j.at("arrangements");
    check_keys(r, "arrangements", {"budget", "exact", "seed"});
    c.budget = r.value("budget", 1000ll);
    c.exact = r.value("exact", false);
    c.arr_seed = r.value("seed", 0ull);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, "solver",
               {"mode", "beta", "rho", "rel_tol", "max_iters", "huber_mu", "certificate_probes",
                "certificate_seed"});
    c.solver_mode = s.value("mode", "admm");
    if (c.solver_mode != "admm" && c.solver_mode != "penalized" && c.solver_mode != "both")
      throw std::invalid_argument("config: solver.mode must be admm|penalized|both");
    c.beta = s.value("beta", 1e-3);
    c.rho = s.value("rho", -1.0);
    c.rel_tol = s.value("rel_tol", 1e-9);
    c.max_iters = s.value("max_iters", 20000);
    c.huber_mu = s.value("huber_mu", 1e-6);
    c.certificate_probes = s.value("certificate_probes", 10000);
    c.certificate_seed = s.value("certificate_seed", 7ull);
  }
  if (j.contains("sgd")) {
    const json& s = j.at("sgd");
    check_keys(s, "sgd",
               {"seeds", "lr", "batch", "epochs", "decay_factor", "decay_every", "init_scale",
                "log_every"});
    if (s.contains("seeds")) c.sgd_seeds = s.at("seeds").get<std::vector<uint64_t>>();
    c.lr = s.value("lr", 1e-2);
    c.batch = s.value("batch", 10);
    c.epochs = s.value("epochs", 1000);
    c.decay_factor = s.value("decay_factor", 1.0);
    c.decay_every = s.value("decay_every", 0);
    c.init_scale = s.value("init_scale", 1.0);
    c.log_every = s.value("log_every", 1);
  }
  if (c.n < 1 || c.d < 1) throw std::invalid_argument("config: n and d must be positive");
  if (c.source == "synthetic" && static_cast<int>(c.labels.size()) != c.n)
    throw std::invalid_argument("config: synthetic data needs n labels");
  return c;
}

uint64_t instance_hash(const ExperimentConfig& cfg, const DataBundle& bundle) {
  uint64_t h = bundle.hash();
  h = fnv1a_str(cfg.arch, h);
  int ints[4] = {cfg.h, cfg.stride, cfg.L, 0};
  h = fnv1a(ints, sizeof(ints), h);
  h = fnv1a(&cfg.beta, sizeof(double), h);
  return h;
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = dir + "/.lock";
  FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw std::runtime_error("output directory is locked by another writer: " + dir);
  std::fclose(f);
  held_ = true;
}

DirLock::~DirLock() {
  if (held_) std::remove(path_.c_str());
}

namespace {

DataBundle load_train_bundle(const StageContext& ctx) {
  return bundle_from_json(read_file(ctx.out_dir + "/bundle.json"));
}

struct Instance {
  DataBundle bundle;
  std::shared_ptr<const PatchSet> ps;
  std::shared_ptr<const SpectralFeatures> sf;
  uint64_t hash = 0;
};

Instance make_instance(const StageContext& ctx, const DataBundle& bundle) {
  Instance inst;
  inst.bundle = bundle;
  inst.ps = std::make_shared<PatchSet>(extract_patches(bundle, ctx.cfg.h, ctx.cfg.stride));
  Arch arch = arch_from_string(ctx.cfg.arch);
  if (arch == Arch::Circular || arch == Arch::LinearCircular)
    inst.sf = std::make_shared<SpectralFeatures>(spectral_features(bundle));
  inst.hash = instance_hash(ctx.cfg, bundle);
  return inst;
}

ProgramPtr build_program(const StageContext& ctx, const Instance& inst,
                         std::shared_ptr<const ArrangementSet> arr) {
  Arch arch = arch_from_string(ctx.cfg.arch);
  switch (arch) {
    case Arch::AvgPool:
      return build_avgpool(inst.ps, arr, inst.bundle.y, ctx.cfg.beta);
    case Arch::MaxPool:
      return build_maxpool(inst.ps, arr, inst.bundle.y, ctx.cfg.beta);
    case Arch::Circular:
      return build_circular(inst.sf, arr, inst.bundle.y, ctx.cfg.beta, ctx.cfg.L);
    case Arch::ThreeLayer:
      return build_threelayer(inst.ps, arr, inst.bundle.y, ctx.cfg.beta);
    case Arch::LinearNuclear:
      return build_linear_nuclear(inst.ps, inst.bundle.y, ctx.cfg.beta);
    case Arch::LinearCircular:
      return build_linear_circular(inst.sf, inst.bundle.y, ctx.cfg.beta);
  }
  throw std::invalid_argument("unknown arch");
}

SolverConfig solver_config(const ExperimentConfig& cfg) {
  SolverConfig s;
  s.max_iters = cfg.max_iters;
  s.rel_tol = cfg.rel_tol;
  s.rho = cfg.rho;
  s.huber_mu = cfg.huber_mu;
  return s;
}

json meta_header(const Instance& inst) {
  json j;
  j["instance_hash"] = hash_hex(inst.hash);
  return j;
}

void require_hash(const json& j, const Instance& inst, const std::string& what) {
  if (j.value("instance_hash", "") != hash_hex(inst.hash))
    throw std::runtime_error(what + ": instance hash mismatch");
}

}  // namespace

int cmd_ingest(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  fs::create_directories(ctx.out_dir);
  DataBundle train, test;
  if (c.source == "synthetic") {
    VectorXd labels = Eigen::Map<const VectorXd>(c.labels.data(), c.labels.size());
    train = gen_synthetic(c.n, c.d, c.data_seed, labels);
  } else if (c.source == "mnist") {
    auto [tr, te] = load_mnist_split(c.images_path, c.labels_path, c.class_pos, c.class_neg, c.n,
                                     c.test_n, c.d, c.data_seed);
    train = tr;
    test = te;
  } else if (c.source == "cifar10") {
    auto [tr, te] = load_cifar10_split(c.batch_path, c.class_pos, c.class_neg, c.n, c.test_n, c.d,
                                       c.data_seed);
    train = tr;
    test = te;
  } else {
    throw std::invalid_argument("config: unknown data source " + c.source);
  }
  write_file(ctx.out_dir + "/bundle.json", bundle_to_json(train));
  if (test.n > 0) write_file(ctx.out_dir + "/test_bundle.json", bundle_to_json(test));
  return kOk;
}

int cmd_enumerate(const StageContext& ctx) {
  DataBundle bundle = load_train_bundle(ctx);
  Instance inst = make_instance(ctx, bundle);
  Arch arch = arch_from_string(ctx.cfg.arch);
  ArrangementSet arr;
  switch (arch) {
    case Arch::AvgPool:
      arr = conv_arrangements(*inst.ps, ctx.cfg.budget, ctx.cfg.arr_seed, ctx.cfg.exact);
      break;
    case Arch::MaxPool:
      arr = maxpool_arrangements(*inst.ps, ctx.cfg.budget, ctx.cfg.arr_seed);
      break;
    case Arch::Circular: {
      SpectralFeatures sf = spectral_features(bundle);
      arr = cconv_arrangements(sf, ctx.cfg.budget, ctx.cfg.arr_seed);
      break;
    }
    case Arch::ThreeLayer: {
      ArrangementSet layer1;
      arr = twolevel_arrangements(*inst.ps, layer1, ctx.cfg.budget, ctx.cfg.arr_seed);
      break;
    }
    case Arch::LinearNuclear:
    case Arch::LinearCircular:
      arr.kind = ArrKind::Plain;  // no arrangements needed
      arr.n = bundle.n;
      break;
  }
  save_arrangements(arr, ctx.out_dir + "/arrangements.bin");
  json meta = meta_header(inst);
  meta["count"] = arr.count();
  meta["exact"] = arr.exact;
  meta["kind"] = to_string(arr.kind);
  write_file(ctx.out_dir + "/arrangements.json", meta.dump(2));
  return kOk;
}

int cmd_solve(const StageContext& ctx) {
  DataBundle bundle = load_train_bundle(ctx);
  Instance inst = make_instance(ctx, bundle);
  Arch arch = arch_from_string(ctx.cfg.arch);
  auto arr = std::make_shared<ArrangementSet>(
      load_arrangements(ctx.out_dir + "/arrangements.bin"));
  {
    json meta = json::parse(read_file(ctx.out_dir + "/arrangements.json"));
    require_hash(meta, inst, "solve");
  }
  ProgramPtr p = build_program(ctx, inst, arr);
  SolverConfig scfg = solver_config(ctx.cfg);
  Solution primary;
  std::optional<Solution> secondary;
  if (ctx.cfg.solver_mode == "penalized") {
    primary = solve_penalized(*p, scfg);
  } else {
    primary = solve_admm(*p, scfg);
    if (ctx.cfg.solver_mode == "both") secondary = solve_penalized(*p, scfg);
  }
  write_file(ctx.out_dir + "/program.json", program_manifest(*p, "arrangements.bin"));
  {
    json sj = json::parse(solution_to_json(primary));
    sj["instance_hash"] = hash_hex(inst.hash);
    write_file(ctx.out_dir + "/solution.json", sj.dump(2));
  }
  if (secondary) {
    json sj = json::parse(solution_to_json(*secondary));
    sj["instance_hash"] = hash_hex(inst.hash);
    write_file(ctx.out_dir + "/solution_penalized.json", sj.dump(2));
  }
  DualCertificate cert =
      dual_certificate(*p, primary, ctx.cfg.certificate_probes, ctx.cfg.certificate_seed);
  json cj = meta_header(inst);
  cj["pass"] = cert.pass;
  cj["max_value"] = cert.max_value;
  cj["beta"] = cert.beta;
  write_file(ctx.out_dir + "/certificate.json", cj.dump(2));
  (void)arch;
  return kOk;
}

int cmd_reconstruct(const StageContext& ctx) {
  DataBundle bundle = load_train_bundle(ctx);
  Instance inst = make_instance(ctx, bundle);
  Arch arch = arch_from_string(ctx.cfg.arch);
  if (arch != Arch::AvgPool && arch != Arch::MaxPool && arch != Arch::Circular) return kOk;
  auto arr = std::make_shared<ArrangementSet>(
      load_arrangements(ctx.out_dir + "/arrangements.bin"));
  ProgramPtr p = build_program(ctx, inst, arr);
  json sj = json::parse(read_file(ctx.out_dir + "/solution.json"));
  require_hash(sj, inst, "reconstruct");
  Solution sol = solution_from_json(sj.dump());
  Solution polished = polish_solution(*p, sol);
  ParityReport rep;
  if (arch == Arch::Circular) {
    CircularNet net = reconstruct_circular(polished, *p);
    rep = verify_parity(net, *inst.sf, ctx.cfg.beta, polished, *p);
    write_file(ctx.out_dir + "/net.json", circular_to_json(net));
  } else {
    TwoLayerNet net = reconstruct_twolayer(polished, *p);
    rep = verify_parity(net, *inst.ps, ctx.cfg.beta, polished, *p);
    write_file(ctx.out_dir + "/net.json", twolayer_to_json(net));
  }
  json pj = meta_header(inst);
  pj["convex_objective"] = rep.convex_objective;
  pj["nonconvex_objective"] = rep.nonconvex_objective;
  pj["abs_gap"] = rep.abs_gap;
  pj["rel_gap"] = rep.rel_gap;
  pj["m_star"] = rep.m_star;
  write_file(ctx.out_dir + "/parity.json", pj.dump(2));
  return kOk;
}

int cmd_sgd(const StageContext& ctx) {
  DataBundle bundle = load_train_bundle(ctx);
  Instance inst = make_instance(ctx, bundle);
  Arch arch = arch_from_string(ctx.cfg.arch);
  std::optional<DataBundle> test;
  std::shared_ptr<PatchSet> test_ps;
  if (fs::exists(ctx.out_dir + "/test_bundle.json")) {
    test = bundle_from_json(read_file(ctx.out_dir + "/test_bundle.json"));
    test_ps = std::make_shared<PatchSet>(extract_patches(*test, ctx.cfg.h, ctx.cfg.stride));
  }
  SGDConfig base;
  base.lr = ctx.cfg.lr;
  base.batch = ctx.cfg.batch;
  base.epochs = ctx.cfg.epochs;
  base.beta = ctx.cfg.beta;
  base.decay_factor = ctx.cfg.decay_factor;
  base.decay_every = ctx.cfg.decay_every;
  base.init_scale = ctx.cfg.init_scale;
  base.log_every = ctx.cfg.log_every;
  for (int m : ctx.cfg.m_list) {
    for (uint64_t seed : ctx.cfg.sgd_seeds) {
      SGDConfig cfg = base;
      cfg.seed = seed;
      std::vector<TrajectoryPoint> traj;
      if (arch == Arch::AvgPool || arch == Arch::MaxPool) {
        Pool pool = arch == Arch::AvgPool ? Pool::Avg : Pool::Max;
        auto run =
            train_sgd_twolayer(*inst.ps, bundle.y, m, pool, cfg, test_ps.get(),
                               test ? &test->y : nullptr);
        traj = run.trajectory;
      } else if (arch == Arch::Circular) {
        auto run = train_sgd_circular(bundle.X, bundle.y, m, ctx.cfg.L, cfg,
                                      test ? &test->X : nullptr, test ? &test->y : nullptr);
        traj = run.trajectory;
      } else if (arch == Arch::ThreeLayer) {
        auto run = train_sgd_threelayer(*inst.ps, bundle.y, m, cfg, test_ps.get(),
                                        test ? &test->y : nullptr);
        traj = run.trajectory;
      } else {
        continue;  // linear architectures have no SGD baseline stage
      }
      std::ostringstream name;
      name << ctx.out_dir << "/sgd_m" << m << "_seed" << seed << ".csv";
      std::string body = trajectory_csv(traj, seed);
      // embed the instance hash as a comment header
      write_file(name.str(), "# instance_hash=" + hash_hex(inst.hash) + "\n" + body);
    }
  }
  return kOk;
}

namespace {

struct TrajFile {
  uint64_t seed = 0;
  std::vector<TrajectoryPoint> points;
  std::string instance_hash;
};

TrajFile parse_trajectory_csv(const std::string& path) {
  std::string text = read_file(path);
  TrajFile tf;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("instance_hash=");
      if (pos != std::string::npos) tf.instance_hash = line.substr(pos + 14);
      continue;
    }
    if (line.rfind("seed,", 0) == 0) continue;  // header
    TrajectoryPoint p;
    unsigned long long seed;
    char* end = nullptr;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (cols.size() < 5) continue;
    seed = std::strtoull(cols[0].c_str(), &end, 10);
    tf.seed = seed;
    p.epoch = std::atoi(cols[1].c_str());
    p.objective = std::strtod(cols[2].c_str(), nullptr);
    p.test_accuracy = cols[3].empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : std::strtod(cols[3].c_str(), nullptr);
    p.wall_ms = std::strtod(cols[4].c_str(), nullptr);
    tf.points.push_back(p);
  }
  return tf;
}

}  // namespace

int cmd_compare(const std::string& solution_path, const std::vector<std::string>& trajectory_paths,
                const std::string& out_csv) {
  json sj = json::parse(read_file(solution_path));
  std::string hash = sj.value("instance_hash", "");
  double convex = sj.at("objective").get<double>();
  std::ostringstream out;
  out << "seed,sgd_best,convex_objective,gap,lower_bound_ok\n";
  bool all_ok = true;
  for (const std::string& path : trajectory_paths) {
    TrajFile tf = parse_trajectory_csv(path);
    if (!hash.empty() && !tf.instance_hash.empty() && tf.instance_hash != hash)
      throw std::runtime_error("compare: trajectory " + path + " belongs to another instance");
    double best = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (const TrajectoryPoint& p : tf.points) {
      best = std::min(best, p.objective);
      if (p.objective < convex - 1e-6 * (1.0 + std::abs(convex))) ok = false;
    }
    all_ok = all_ok && ok;
    out << tf.seed << "," << fmt(best) << "," << fmt(convex) << "," << fmt(best - convex) << ","
        << (ok ? 1 : 0) << "\n";
  }
  write_file(out_csv, out.str());
  return all_ok ? kOk : kPropertyViolation;
}

int cmd_run(const StageContext& ctx) {
  DirLock lock(ctx.out_dir);
  double t0 = now_ms();
  int rc = cmd_ingest(ctx);
  if (rc) return rc;
  if ((rc = cmd_enumerate(ctx))) return rc;
  if ((rc = cmd_solve(ctx))) return rc;
  if ((rc = cmd_reconstruct(ctx))) return rc;
  if ((rc = cmd_sgd(ctx))) return rc;

  DataBundle bundle = load_train_bundle(ctx);
  Instance inst = make_instance(ctx, bundle);
  json arrmeta = json::parse(read_file(ctx.out_dir + "/arrangements.json"));
  json sol = json::parse(read_file(ctx.out_dir + "/solution.json"));
  json cert = json::parse(read_file(ctx.out_dir + "/certificate.json"));
  json parity;
  if (fs::exists(ctx.out_dir + "/parity.json"))
    parity = json::parse(read_file(ctx.out_dir + "/parity.json"));
  json solp;
  if (fs::exists(ctx.out_dir + "/solution_penalized.json"))
    solp = json::parse(read_file(ctx.out_dir + "/solution_penalized.json"));

  std::ostringstream csv;
  csv << "instance_hash,arch,source,n,d,h,stride,L,beta,arrangements,exact,convex_objective,"
         "penalized_objective,reconstructed_objective,parity_rel_gap,m_star,certificate_pass,"
         "certificate_max,m,sgd_seed,sgd_best,lower_bound_ok,wall_ms\n";
  double convex = sol.at("objective").get<double>();
  bool property_ok = true;
  double wall = now_ms() - t0;
  for (int m : ctx.cfg.m_list) {
    for (uint64_t seed : ctx.cfg.sgd_seeds) {
      std::ostringstream name;
      name << ctx.out_dir << "/sgd_m" << m << "_seed" << seed << ".csv";
      double best = std::numeric_limits<double>::quiet_NaN();
      int ok = 1;
      if (fs::exists(name.str())) {
        TrajFile tf = parse_trajectory_csv(name.str());
        best = std::numeric_limits<double>::infinity();
        for (const TrajectoryPoint& p : tf.points) {
          best = std::min(best, p.objective);
          if (p.objective < convex - 1e-6 * (1.0 + std::abs(convex))) ok = 0;
        }
      }
      property_ok = property_ok && ok;
      csv << hash_hex(inst.hash) << "," << ctx.cfg.arch << "," << ctx.cfg.source << ","
          << ctx.cfg.n << "," << ctx.cfg.d << "," << ctx.cfg.h << "," << ctx.cfg.stride << ","
          << ctx.cfg.L << "," << fmt(ctx.cfg.beta) << "," << arrmeta.value("count", 0) << ","
          << (arrmeta.value("exact", false) ? 1 : 0) << "," << fmt(convex) << ","
          << (solp.is_null() ? "" : fmt(solp.at("objective").get<double>())) << ","
          << (parity.is_null() ? "" : fmt(parity.at("nonconvex_objective").get<double>())) << ","
          << (parity.is_null() ? "" : fmt(parity.at("rel_gap").get<double>())) << ","
          << (parity.is_null() ? "" : std::to_string(parity.at("m_star").get<int>())) << ","
          << (cert.at("pass").get<bool>() ? 1 : 0) << "," << fmt(cert.at("max_value").get<double>())
          << "," << m << "," << seed << "," << (std::isfinite(best) ? fmt(best) : "") << "," << ok
          << "," << fmt(wall) << "\n";
    }
  }
  write_file(ctx.out_dir + "/summary.csv", csv.str());
  return property_ok ? kOk : kPropertyViolation;
}

}  // namespace ccnn
