#include "tfbench/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "tfbench/errors.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

MatrixView::MatrixView(std::span<const double> v, std::size_t r, std::size_t c) : values(v), rows(r), cols(c) {
  if (v.size() != r * c) {
    throw ShapeError("matrix of " + std::to_string(r) + "x" + std::to_string(c) + " given " +
                     std::to_string(v.size()) + " values");
  }
}

namespace {

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * d2);
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ContractError(std::string(what) + " contains a non-finite value");
}

double resolve_gamma(const SVRParams& p, std::size_t width) {
  return p.gamma > 0.0 ? p.gamma : 1.0 / static_cast<double>(width);
}

void check_svr_inputs(MatrixView X, std::size_t targets, const SVRParams& p) {
  if (X.rows < 2) throw ContractError("fit_svr needs at least 2 rows");
  if (X.cols == 0) throw ContractError("fit_svr needs at least one feature");
  if (targets != X.rows) throw ShapeError("fit_svr: target count differs from row count");
  if (!(p.C > 0.0) || !(p.epsilon >= 0.0) || p.gamma < 0.0 || !(p.tolerance > 0.0) || p.max_iterations == 0) {
    throw ContractError("fit_svr: C, tolerance and max_iterations must be positive, epsilon and gamma non-negative");
  }
  check_finite(X.values, "fit_svr input");
}

std::vector<double> kernel_matrix(MatrixView X, double gamma) {
  const std::size_t n = X.rows;
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    K[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) K[i * n + j] = K[j * n + i] = rbf(X.row(i), X.row(j), gamma);
  }
  return K;
}

// Epsilon-SVR dual over 2n variables: t < n carries alpha_t (sign +1), t >= n
// carries alpha*_{t-n} (sign -1). Minimizes 1/2 a'Qa + p'a subject to
// sign'a = 0 and 0 <= a <= C, with Q_st = sign_s sign_t K and
// p_t = eps - y_t / eps + y_t. Working pairs use second-order selection.
SVRModel solve_svr(MatrixView X, std::span<const double> y, const std::vector<double>& K, const SVRParams& p,
                   double gamma) {
  check_finite(y, "fit_svr target");
  const std::size_t n = X.rows;
  const std::size_t m = 2 * n;
  const double C = p.C;
  constexpr double tau = 1e-12;
  auto sign = [n](std::size_t t) { return t < n ? 1.0 : -1.0; };
  auto base = [n](std::size_t t) { return t < n ? t : t - n; };
  auto Q = [&](std::size_t s, std::size_t t) { return sign(s) * sign(t) * K[base(s) * n + base(t)]; };

  std::vector<double> alpha(m, 0.0), grad(m);
  for (std::size_t t = 0; t < n; ++t) {
    grad[t] = p.epsilon - y[t];
    grad[t + n] = p.epsilon + y[t];
  }
  auto in_up = [&](std::size_t t) { return sign(t) > 0 ? alpha[t] < C : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return sign(t) > 0 ? alpha[t] > 0.0 : alpha[t] < C; };

  std::size_t iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    // i: most violating index in the up set; j: best second-order partner.
    double g_max = -INFINITY;
    std::size_t i = m;
    for (std::size_t t = 0; t < m; ++t) {
      if (in_up(t) && -sign(t) * grad[t] > g_max) {
        g_max = -sign(t) * grad[t];
        i = t;
      }
    }
    double g_min = INFINITY;
    std::size_t j = m;
    double best = INFINITY;
    for (std::size_t t = 0; t < m && i < m; ++t) {
      if (!in_low(t)) continue;
      const double v = -sign(t) * grad[t];
      g_min = std::min(g_min, v);
      const double b = g_max - v;
      if (b > 0.0) {
        double a = Q(i, i) + Q(t, t) - 2.0 * sign(i) * sign(t) * Q(i, t);
        if (a <= 0.0) a = tau;
        if (-(b * b) / a < best) {
          best = -(b * b) / a;
          j = t;
        }
      }
    }
    gap = g_max - g_min;
    if (i == m || j == m || gap < p.tolerance) break;
    if (iter >= p.max_iterations) {
      throw TrainingError("SVR did not converge after " + std::to_string(iter) + " iterations; final KKT gap " +
                          std::to_string(gap) + " (tolerance " + std::to_string(p.tolerance) + ")");
    }

    const double old_i = alpha[i], old_j = alpha[j];
    if (sign(i) != sign(j)) {
      double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < m; ++t) grad[t] += Q(t, i) * di + Q(t, j) * dj;
  }

  // Bias from free variables, or the midpoint of the feasible interval.
  double upper = INFINITY, lower = -INFINITY, free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < m; ++t) {
    const double yg = sign(t) * grad[t];
    const bool at_upper = alpha[t] >= C, at_lower = alpha[t] <= 0.0;
    if (at_upper) {
      if (sign(t) < 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (at_lower) {
      if (sign(t) > 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (upper + lower) / 2.0;

  SVRModel model;
  model.width = X.cols;
  model.bias = -rho;
  model.gamma = gamma;
  model.C = C;
  model.epsilon = p.epsilon;
  model.iterations = iter;
  for (std::size_t t = 0; t < n; ++t) {
    const double coef = alpha[t] - alpha[t + n];
    if (coef == 0.0) continue;
    model.dual_coefficients.push_back(coef);
    model.support_indices.push_back(t);
    const auto row = X.row(t);
    model.support_vectors.insert(model.support_vectors.end(), row.begin(), row.end());
  }

  const double violation = svr_kkt_violation(model, X, y);
  if (!(violation <= p.tolerance + 1e-9)) {
    throw TrainingError("SVR post-fit KKT check failed: violation " + std::to_string(violation) + " exceeds " +
                        std::to_string(p.tolerance));
  }
  return model;
}

}  // namespace

double SVRModel::predict(std::span<const double> x) const {
  if (x.size() != width) throw ContractError("SVR expects width " + std::to_string(width));
  double f = bias;
  for (std::size_t s = 0; s < dual_coefficients.size(); ++s) {
    f += dual_coefficients[s] * rbf({support_vectors.data() + s * width, width}, x, gamma);
  }
  return f;
}

SVRModel fit_svr(MatrixView X, std::span<const double> y, const SVRParams& params) {
  check_svr_inputs(X, y.size(), params);
  const double gamma = resolve_gamma(params, X.cols);
  return solve_svr(X, y, kernel_matrix(X, gamma), params, gamma);
}

std::vector<SVRModel> fit_svr_columns(MatrixView X, MatrixView Y, const SVRParams& params) {
  check_svr_inputs(X, Y.rows, params);
  const double gamma = resolve_gamma(params, X.cols);
  const auto K = kernel_matrix(X, gamma);
  std::vector<SVRModel> out;
  std::vector<double> column(Y.rows);
  for (std::size_t k = 0; k < Y.cols; ++k) {
    for (std::size_t i = 0; i < Y.rows; ++i) column[i] = Y.values[i * Y.cols + k];
    out.push_back(solve_svr(X, column, K, params, gamma));
  }
  return out;
}

double svr_kkt_violation(const SVRModel& model, MatrixView X, std::span<const double> y) {
  std::vector<double> coef(X.rows, 0.0);
  for (std::size_t s = 0; s < model.support_count(); ++s) {
    const std::size_t i = model.support_indices.at(s);
    if (i >= X.rows) throw ContractError("support index outside the given training rows");
    coef[i] = model.dual_coefficients[s];
  }
  const double eps = model.epsilon, C = model.C;
  double worst = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double r = y[i] - model.predict(X.row(i));
    const double c = coef[i];
    double v = 0.0;
    if (c == 0.0) v = std::abs(r) - eps;  // inside the tube
    else if (c >= C) v = eps - r;         // above the tube
    else if (c <= -C) v = eps + r;        // below the tube
    else if (c > 0.0) v = std::abs(r - eps);
    else v = std::abs(r + eps);
    worst = std::max(worst, v);
  }
  return worst;
}

double svr_dual_objective(MatrixView X, std::span<const double> y, std::span<const double> b, double gamma,
                          double epsilon) {
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    for (std::size_t j = 0; j < X.rows; ++j) quad += b[i] * b[j] * rbf(X.row(i), X.row(j), gamma);
    lin += -y[i] * b[i] + epsilon * std::abs(b[i]);
  }
  return 0.5 * quad + lin;
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const auto& node = nodes[k];
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes[k].value;
}

namespace {

struct TreeBuilder {
  MatrixView X;
  std::span<const double> y;
  const ForestParams& p;
  std::size_t mtry;
  std::mt19937_64& rng;
  RegressionTree tree;

  int grow(std::vector<std::size_t>& idx, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    TreeNode node;
    node.samples = idx.size();
    node.depth = depth;
    // Running mean: exact when every target is equal.
    double mean = 0.0, k = 0.0;
    bool pure = true;
    for (std::size_t i : idx) {
      mean += (y[i] - mean) / ++k;
      pure = pure && y[i] == y[idx.front()];
    }
    node.value = mean;

    if (!pure && depth < p.max_depth && idx.size() >= 2 * p.min_leaf) {
      const auto split = best_split(idx);
      if (split.feature >= 0) {
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) {
          (X.values[i * X.cols + static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right)
              .push_back(i);
        }
        node.feature = split.feature;
        node.threshold = split.threshold;
        std::vector<std::size_t>().swap(idx);
        node.left = grow(left, depth + 1);
        node.right = grow(right, depth + 1);
      }
    }
    tree.nodes[static_cast<std::size_t>(id)] = node;
    return id;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  Split best_split(const std::vector<std::size_t>& idx) {
    const std::size_t n = idx.size();
    std::vector<std::size_t> features(X.cols);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t k = 0; k + 1 < features.size(); ++k) {
      std::swap(features[k], features[k + uniform_index(rng, features.size() - k)]);
    }
    double total = 0.0, squares = 0.0;
    for (std::size_t i : idx) {
      total += y[i];
      squares += y[i] * y[i];
    }
    // Gains closer than this are ties; equal partitions reached through
    // different features differ only by rounding.
    const double tie = 1e-12 * std::max(squares, 1e-300);

    Split best;
    std::vector<std::pair<double, double>> column(n);
    std::size_t informative = 0;
    for (std::size_t f : features) {
      if (informative >= mtry) break;
      for (std::size_t r = 0; r < n; ++r) column[r] = {X.values[idx[r] * X.cols + f], y[idx[r]]};
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;  // constant here; keep drawing
      ++informative;
      // Gain of a split = left_sum^2/nl + right_sum^2/nr - total^2/n.
      double left = 0.0;
      for (std::size_t r = 0; r + 1 < n; ++r) {
        left += column[r].second;
        if (column[r].first == column[r + 1].first) continue;
        const std::size_t nl = r + 1, nr = n - nl;
        if (nl < p.min_leaf || nr < p.min_leaf) continue;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) -
                            total * total / static_cast<double>(n);
        const double threshold = column[r].first + (column[r + 1].first - column[r].first) / 2.0;
        const int fi = static_cast<int>(f);
        const bool better = best.feature < 0 ? gain > tie
                            : gain > best.gain + tie ||
                                  (gain >= best.gain - tie &&
                                   (fi < best.feature || (fi == best.feature && threshold < best.threshold)));
        if (better) best = {fi, threshold, gain};
      }
    }
    return best;
  }
};

void check_predict_width(std::size_t width, MatrixView X) {
  if (X.rows > 0 && X.cols != width) {
    throw ContractError("model trained on width " + std::to_string(width) + " given rows of width " +
                        std::to_string(X.cols));
  }
}

}  // namespace

double RFModel::predict(std::span<const double> x) const {
  if (x.size() != width) throw ContractError("forest expects width " + std::to_string(width));
  double mean = 0.0, k = 0.0;
  for (const auto& t : trees) mean += (t.predict(x) - mean) / ++k;
  return mean;
}

RFModel fit_random_forest(MatrixView X, std::span<const double> y, const ForestParams& params) {
  if (y.size() != X.rows) throw ShapeError("fit_random_forest: target count differs from row count");
  if (params.n_trees == 0 || params.min_leaf == 0) throw ContractError("n_trees and min_leaf must be positive");
  if (X.rows < params.min_leaf || X.rows == 0) throw ContractError("fit_random_forest needs n >= min_leaf");
  if (X.cols == 0) throw ContractError("fit_random_forest needs at least one feature");
  check_finite(X.values, "fit_random_forest input");
  check_finite(y, "fit_random_forest target");

  RFModel model;
  model.width = X.cols;
  model.params = params;
  std::size_t mtry = params.max_features;
  if (mtry == 0) mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(X.cols))));
  mtry = std::clamp<std::size_t>(mtry, 1, X.cols);

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    std::mt19937_64 rng(hash_combine(params.seed, t));
    std::vector<std::size_t> idx(X.rows);
    if (params.bootstrap) {
      for (auto& i : idx) i = uniform_index(rng, X.rows);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    TreeBuilder builder{X, y, params, mtry, rng, {}};
    builder.grow(idx, 0);
    model.trees.push_back(std::move(builder.tree));
  }
  return model;
}

std::vector<double> predict_classical(const SVRModel& model, MatrixView X) {
  check_predict_width(model.width, X);
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = model.predict(X.row(i));
  return out;
}

std::vector<double> predict_classical(const RFModel& model, MatrixView X) {
  check_predict_width(model.width, X);
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = model.predict(X.row(i));
  return out;
}

}  // namespace tfbench
