#pragma once

// Support vector regression (RBF kernel, epsilon-insensitive loss, SMO
// solver) and random-forest regression on flattened windows.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace tfbench {

// Row-major [rows, cols] view.
struct MatrixView {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const double> v, std::size_t r, std::size_t c);
  std::span<const double> row(std::size_t i) const { return values.subspan(i * cols, cols); }
};

struct SVRParams {
  double C = 10.0;
  double epsilon = 0.01;
  double gamma = 0.0;  // 0 selects 1 / width
  double tolerance = 1e-3;
  std::size_t max_iterations = 100000;
};

struct SVRModel {
  std::size_t width = 0;
  std::vector<double> support_vectors;    // [n_sv, width]
  std::vector<double> dual_coefficients;  // alpha - alpha*, one per support vector
  std::vector<std::size_t> support_indices;  // training row of each support vector
  double bias = 0.0;
  double gamma = 0.0;
  double C = 0.0;
  double epsilon = 0.0;
  std::size_t iterations = 0;

  std::size_t support_count() const { return dual_coefficients.size(); }
  double predict(std::span<const double> x) const;
};

// Solves the dual until the maximal violating pair gap is below the
// tolerance. Throws TrainingError with the final gap when max_iterations
// is reached first.
SVRModel fit_svr(MatrixView X, std::span<const double> y, const SVRParams& params = {});
// One regressor per target column of Y [n, k], sharing the kernel matrix.
std::vector<SVRModel> fit_svr_columns(MatrixView X, MatrixView Y, const SVRParams& params = {});

// Largest KKT violation of a fitted model on the rows it was trained on,
// measured on residuals y - f(x) against the epsilon tube.
double svr_kkt_violation(const SVRModel& model, MatrixView X, std::span<const double> y);

// Dual objective 1/2 b'Kb - y'b + eps * sum|b| for coefficients b over the
// rows of X.
double svr_dual_objective(MatrixView X, std::span<const double> y, std::span<const double> coefficients, double gamma,
                          double epsilon);

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 10;
  std::size_t min_leaf = 2;
  std::size_t max_features = 0;  // 0 selects floor(sqrt(width)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;
  int left = -1;
  int right = -1;
  std::size_t samples = 0;
  std::size_t depth = 0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
};

struct RFModel {
  std::size_t width = 0;
  std::vector<RegressionTree> trees;
  ForestParams params;

  double predict(std::span<const double> x) const;
};

// Split candidates are midpoints between consecutive distinct feature
// values; the split maximizing the reduction in summed squared error wins,
// ties going to the lower feature index then the lower threshold.
RFModel fit_random_forest(MatrixView X, std::span<const double> y, const ForestParams& params = {});

// One prediction per row. Throws ContractError when X.cols differs from the
// training width (unless X has no rows).
std::vector<double> predict_classical(const SVRModel& model, MatrixView X);
std::vector<double> predict_classical(const RFModel& model, MatrixView X);

}  // namespace tfbench
