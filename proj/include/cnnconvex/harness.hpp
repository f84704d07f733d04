#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cnnconvex/reconstruct.hpp"

namespace ccnn {

/// Schema-validated experiment description; unknown keys are rejected so
/// hyperparameter typos fail loudly.
struct ExperimentConfig {
  // data
  std::string source = "synthetic";
  int n = 0, d = 0;
  uint64_t data_seed = 0;
  std::vector<double> labels;  // synthetic only
  int class_pos = 0, class_neg = 1;
  std::string images_path, labels_path, batch_path;
  int test_n = 0;
  // arch
  std::string arch = "avgpool";
  int h = 1, stride = 1, L = 3;
  std::vector<int> m_list{1};
  // arrangements
  int64_t budget = 1000;
  bool exact = false;
  uint64_t arr_seed = 0;
  // solver
  std::string solver_mode = "admm";  // admm | penalized | both
  double beta = 1e-3;
  double rho = -1.0;
  double rel_tol = 1e-9;
  int max_iters = 20000;
  double huber_mu = 1e-6;
  int certificate_probes = 10000;
  uint64_t certificate_seed = 7;
  // sgd
  std::vector<uint64_t> sgd_seeds{0};
  double lr = 1e-2;
  int batch = 10;
  int epochs = 1000;
  double decay_factor = 1.0;
  int decay_every = 0;
  double init_scale = 1.0;
  int log_every = 1;
};

ExperimentConfig parse_config(const std::string& json_text);

/// Exit codes shared by the CLI: 0 ok, 2 config error, 3 stage failure,
/// 4 acceptance-property violation.
enum ExitCode { kOk = 0, kConfigError = 2, kStageFailure = 3, kPropertyViolation = 4 };

struct StageContext {
  ExperimentConfig cfg;
  std::string out_dir;
};

uint64_t instance_hash(const ExperimentConfig& cfg, const DataBundle& bundle);

int cmd_ingest(const StageContext& ctx);
int cmd_enumerate(const StageContext& ctx);
int cmd_solve(const StageContext& ctx);
int cmd_reconstruct(const StageContext& ctx);
int cmd_sgd(const StageContext& ctx);
int cmd_run(const StageContext& ctx);
int cmd_compare(const std::string& solution_path, const std::vector<std::string>& trajectory_paths,
                const std::string& out_csv);

/// Exclusive output-directory lock (single writer); released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  bool held_ = false;
};

}  // namespace ccnn
