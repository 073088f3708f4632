#include "bsr/likelihood.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "bsr/error.hpp"
#include "bsr/random.hpp"

namespace bsr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Operand {
  const double* ptr = nullptr;  // null means a broadcast scalar
  double scalar = 0.0;
  int buffer = -1;  // owned scratch buffer, if any
};

template <class F>
void unary_loop(F f, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i]);
}

template <class F>
void binary_loop(F f, const Operand& a, const Operand& b, double* out, std::size_t n) {
  if (a.ptr && b.ptr) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a.ptr[i], b.ptr[i]);
  } else if (a.ptr) {
    const double s = b.scalar;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a.ptr[i], s);
  } else {
    const double s = a.scalar;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(s, b.ptr[i]);
  }
}

template <Op O>
struct Apply {
  double operator()(double a, double b = 0.0) const noexcept { return apply_op(O, a, b); }
};

void run_unary(Op op, const double* a, double* out, std::size_t n) {
  switch (op) {
    case Op::Exp: unary_loop(Apply<Op::Exp>{}, a, out, n); break;
    case Op::Log: unary_loop(Apply<Op::Log>{}, a, out, n); break;
    case Op::Sin: unary_loop(Apply<Op::Sin>{}, a, out, n); break;
    case Op::Cos: unary_loop(Apply<Op::Cos>{}, a, out, n); break;
    case Op::Sqrt: unary_loop(Apply<Op::Sqrt>{}, a, out, n); break;
    case Op::Abs: unary_loop(Apply<Op::Abs>{}, a, out, n); break;
    case Op::Neg: unary_loop(Apply<Op::Neg>{}, a, out, n); break;
    default: break;
  }
}

void run_binary(Op op, const Operand& a, const Operand& b, double* out, std::size_t n) {
  switch (op) {
    case Op::Add: binary_loop(Apply<Op::Add>{}, a, b, out, n); break;
    case Op::Sub: binary_loop(Apply<Op::Sub>{}, a, b, out, n); break;
    case Op::Mul: binary_loop(Apply<Op::Mul>{}, a, b, out, n); break;
    case Op::Div: binary_loop(Apply<Op::Div>{}, a, b, out, n); break;
    case Op::Pow: binary_loop(Apply<Op::Pow>{}, a, b, out, n); break;
    default: break;
  }
}

// ---------------------------------------------------------------------------
// Local optimizers

struct LocalResult {
  std::vector<double> theta;
  double sse = kInf;
  bool converged = false;
};

class Residuals {
 public:
  Residuals(CompiledModel& model, const Dataset& data)
      : model_(model), data_(data), pred_(data.size()) {}

  // r = y - f(theta); false if any entry is non-finite.
  bool operator()(const std::vector<double>& theta, Eigen::VectorXd& r) {
    model_.predict(theta, data_, pred_);
    const auto y = data_.target();
    r.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = y[i] - pred_[i];
      if (!std::isfinite(r[static_cast<Eigen::Index>(i)])) return false;
    }
    return true;
  }

  double sse(const std::vector<double>& theta) { return model_.sse(theta, data_); }

 private:
  CompiledModel& model_;
  const Dataset& data_;
  std::vector<double> pred_;
};

// Forward-difference Jacobian of the model output, J = -dr/dtheta.
bool jacobian(Residuals& res, std::vector<double> theta, const Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
  const std::size_t k = theta.size();
  jac.resize(r.size(), static_cast<Eigen::Index>(k));
  Eigen::VectorXd rh;
  for (std::size_t j = 0; j < k; ++j) {
    const double orig = theta[j];
    double h = 1.4901161193847656e-8 * std::max(1.0, std::fabs(orig));
    theta[j] = orig + h;
    bool ok = res(theta, rh);
    if (!ok) {
      h = -h;
      theta[j] = orig + h;
      ok = res(theta, rh);
    }
    theta[j] = orig;
    if (!ok) return false;
    jac.col(static_cast<Eigen::Index>(j)) = (r - rh) / h;
  }
  return true;
}

LocalResult levenberg_marquardt(Residuals& res, std::vector<double> theta, const FitConfig& cfg) {
  LocalResult out;
  Eigen::VectorXd r;
  if (!res(theta, r)) return out;
  double sse = r.squaredNorm();
  out = {theta, sse, false};

  Eigen::MatrixXd jac;
  if (!jacobian(res, theta, r, jac)) return out;

  const auto k = static_cast<Eigen::Index>(theta.size());
  double lambda = 1e-3;
  Eigen::VectorXd rn;
  std::vector<double> trial(theta.size());

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (sse == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    const double max_diag = a.diagonal().maxCoeff();
    if (!(max_diag > 0.0)) {
      out.converged = true;  // the model does not depend on its parameters
      break;
    }
    Eigen::MatrixXd damped = a;
    for (Eigen::Index j = 0; j < k; ++j)
      damped(j, j) += lambda * std::max(a(j, j), 1e-12 * max_diag);
    const Eigen::VectorXd step = damped.ldlt().solve(g);

    bool improved = false;
    if (step.allFinite()) {
      for (Eigen::Index j = 0; j < k; ++j) trial[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)] + step[j];
      if (res(trial, rn)) {
        const double sse_new = rn.squaredNorm();
        if (sse_new < sse) {
          const double rel = (sse - sse_new) / sse;
          theta = trial;
          r = rn;
          sse = sse_new;
          out = {theta, sse, false};
          improved = true;
          const bool near_gauss_newton = lambda < 1.0;
          lambda = std::max(lambda / 3.0, 1e-12);
          if (rel <= cfg.tolerance && near_gauss_newton) {
            out.converged = true;
            break;
          }
          if (!jacobian(res, theta, r, jac)) break;
        }
      }
    }
    if (!improved) {
      lambda *= 4.0;
      if (lambda > 1e16) {
        // No damped step improves the fit: stationary to working precision.
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

LocalResult nelder_mead(Residuals& res, const std::vector<double>& start, const FitConfig& cfg) {
  const std::size_t k = start.size();
  auto f = [&](const std::vector<double>& t) {
    const double v = res.sse(t);
    return std::isfinite(v) ? v : kInf;
  };
  std::vector<std::vector<double>> simplex(k + 1, start);
  for (std::size_t j = 0; j < k; ++j) simplex[j + 1][j] += std::max(0.5, 0.1 * std::fabs(start[j]));
  std::vector<double> fv(k + 1);
  for (std::size_t i = 0; i <= k; ++i) fv[i] = f(simplex[i]);

  std::vector<std::size_t> order(k + 1);
  std::vector<double> centroid(k), xr(k), xe(k), xc(k);
  bool converged = false;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    for (std::size_t i = 0; i <= k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[k - 1];
    // A simplex that has found no finite vertex after a short search is not
    // going to: the model is undefined around this start.
    if (!std::isfinite(fv[best]) && iter >= 10 * static_cast<int>(k + 1)) break;
    if (std::isfinite(fv[worst]) && fv[worst] - fv[best] <= cfg.tolerance * (std::fabs(fv[best]) + 1e-300)) {
      converged = true;
      break;
    }
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= k; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < k; ++j) centroid[j] += simplex[i][j] / static_cast<double>(k);
    }
    for (std::size_t j = 0; j < k; ++j) xr[j] = centroid[j] + (centroid[j] - simplex[worst][j]);
    const double fr = f(xr);
    if (fr < fv[best]) {
      for (std::size_t j = 0; j < k; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    for (std::size_t j = 0; j < k; ++j)
      xc[j] = outside ? centroid[j] + 0.5 * (xr[j] - centroid[j])
                      : centroid[j] + 0.5 * (simplex[worst][j] - centroid[j]);
    const double fc = f(xc);
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= k; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < k; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      fv[i] = f(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  return {simplex[best], fv[best], converged};
}

std::vector<double> initial_point(std::size_t k, std::uint64_t seed, int restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  std::mt19937_64 rng(seq);
  // Student-t with 3 degrees of freedom, built from normals so the stream
  // does not depend on the standard library's distribution code.
  std::vector<double> theta(k);
  for (auto& t : theta) {
    const double z = standard_normal(rng);
    double chi2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double g = standard_normal(rng);
      chi2 += g * g;
    }
    t = z / std::sqrt(chi2 / 3.0);
  }
  return theta;
}

}  // namespace

// ---------------------------------------------------------------------------
// CompiledModel

CompiledModel::CompiledModel(const ExprTree& tree) : param_count_(tree.param_count()) {
  const auto& ids = tree.parameter_ids();
  std::size_t depth = 0;
  const auto& nodes = tree.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Instr ins{it->kind, it->op, 0, it->value};
    if (it->kind == NodeKind::Variable) ins.slot = it->index;
    if (it->kind == NodeKind::Parameter)
      ins.slot = static_cast<std::uint32_t>(std::find(ids.begin(), ids.end(), it->index) - ids.begin());
    program_.push_back(ins);
    if (it->kind == NodeKind::Operator)
      depth = depth + 1 - static_cast<std::size_t>(arity(it->op));
    else
      ++depth;
    max_stack_ = std::max(max_stack_, depth);
  }
}

void CompiledModel::predict(std::span<const double> theta, const Dataset& data, std::span<double> out) {
  const std::size_t n = data.size();
  if (buffers_.size() < max_stack_ || (!buffers_.empty() && buffers_.front().size() != n)) {
    buffers_.assign(max_stack_, std::vector<double>(n));
  }
  std::vector<int> free_list;
  for (int b = static_cast<int>(max_stack_) - 1; b >= 0; --b) free_list.push_back(b);
  auto acquire = [&] {
    const int b = free_list.back();
    free_list.pop_back();
    return b;
  };

  Operand stack_storage[64];
  std::vector<Operand> big_stack;
  Operand* stack = stack_storage;
  if (max_stack_ > 64) {
    big_stack.resize(max_stack_);
    stack = big_stack.data();
  }
  std::size_t top = 0;

  for (const Instr& ins : program_) {
    switch (ins.kind) {
      case NodeKind::Variable:
        stack[top++] = Operand{data.column(ins.slot).data(), 0.0, -1};
        break;
      case NodeKind::Parameter:
        stack[top++] = Operand{nullptr, theta[ins.slot], -1};
        break;
      case NodeKind::Constant:
        stack[top++] = Operand{nullptr, ins.value, -1};
        break;
      case NodeKind::Operator: {
        if (arity(ins.op) == 1) {
          Operand& a = stack[top - 1];
          if (!a.ptr) {
            a.scalar = apply_op(ins.op, a.scalar);
            break;
          }
          const int dst = a.buffer >= 0 ? a.buffer : acquire();
          run_unary(ins.op, a.ptr, buffers_[static_cast<std::size_t>(dst)].data(), n);
          a = Operand{buffers_[static_cast<std::size_t>(dst)].data(), 0.0, dst};
        } else {
          const Operand a = stack[top - 1];  // left operand sits on top
          const Operand b = stack[top - 2];
          top -= 2;
          if (!a.ptr && !b.ptr) {
            stack[top++] = Operand{nullptr, apply_op(ins.op, a.scalar, b.scalar), -1};
            break;
          }
          int dst = a.buffer >= 0 ? a.buffer : (b.buffer >= 0 ? b.buffer : acquire());
          run_binary(ins.op, a, b, buffers_[static_cast<std::size_t>(dst)].data(), n);
          if (a.buffer >= 0 && b.buffer >= 0) free_list.push_back(b.buffer);
          stack[top++] = Operand{buffers_[static_cast<std::size_t>(dst)].data(), 0.0, dst};
        }
        break;
      }
    }
  }
  const Operand& result = stack[0];
  if (result.ptr)
    std::copy(result.ptr, result.ptr + n, out.begin());
  else
    std::fill(out.begin(), out.end(), result.scalar);
}

double CompiledModel::sse(std::span<const double> theta, const Dataset& data) {
  prediction_.resize(data.size());
  predict(theta, data, prediction_);
  const auto y = data.target();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - prediction_[i];
    total += r * r;
  }
  return std::isfinite(total) ? total : kInf;
}

// ---------------------------------------------------------------------------

std::vector<double> dense_parameters(const ExprTree& tree, const ParamVector& params) {
  std::vector<double> theta;
  for (auto id : tree.parameter_ids()) {
    const auto it = params.values.find(parameter_name(id));
    if (it == params.values.end()) throw ValidationError("missing parameter " + parameter_name(id));
    theta.push_back(it->second);
  }
  return theta;
}

ParamVector named_parameters(const ExprTree& tree, std::span<const double> theta, double sigma) {
  ParamVector p;
  const auto& ids = tree.parameter_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) p.values[parameter_name(ids[i])] = theta[i];
  p.sigma = sigma;
  return p;
}

double sse(const ExprTree& tree, const ParamVector& params, const Dataset& data) {
  if (tree.max_variable() >= static_cast<int>(data.n_features()))
    throw ValidationError("tree references x" + std::to_string(tree.max_variable()) + " but dataset has " +
                          std::to_string(data.n_features()) + " feature columns");
  CompiledModel model(tree);
  return model.sse(dense_parameters(tree, params), data);
}

double log_likelihood_mle(std::size_t n, double sse, bool clamp) {
  const double nd = static_cast<double>(n);
  if (std::isinf(sse)) return -kInf;
  if (clamp) sse = std::max(sse, nd * kZeroSseVariance);
  if (!(sse > 0.0)) throw DegenerateFitError("SSE is zero: the noise-scale estimate vanishes");
  return -0.5 * nd * (std::log(2.0 * std::numbers::pi) + std::log(sse / nd) + 1.0);
}

double log_likelihood_mle(const ExprTree&, const FitResult& fit, const Dataset& data, bool clamp) {
  return log_likelihood_mle(data.size(), fit.sse, clamp);
}

FitResult fit_params(const ExprTree& tree, const Dataset& data, const FitConfig& cfg) {
  const std::size_t k = tree.param_count();
  const std::size_t n = data.size();
  if (k > n)
    throw OverParameterizedError("model has " + std::to_string(k) + " parameters but only " +
                                 std::to_string(n) + " observations");
  if (tree.max_variable() >= static_cast<int>(data.n_features()))
    throw ValidationError("tree references x" + std::to_string(tree.max_variable()) + " but dataset has " +
                          std::to_string(data.n_features()) + " feature columns");
  if (cfg.restarts < 1) throw ValidationError("fit.restarts must be at least 1");

  CompiledModel model(tree);
  Residuals res(model, data);

  LocalResult best;
  int used = 0;
  if (k == 0) {
    best = {{}, model.sse({}, data), true};
  } else {
    for (int r = 0; r < cfg.restarts; ++r) {
      ++used;
      const auto start = initial_point(k, cfg.seed, r);
      LocalResult local = levenberg_marquardt(res, start, cfg);
      if (!std::isfinite(local.sse)) {
        LocalResult simplex = nelder_mead(res, start, cfg);
        if (std::isfinite(simplex.sse)) {
          LocalResult polished = levenberg_marquardt(res, simplex.theta, cfg);
          local = polished.sse <= simplex.sse ? polished : simplex;
        }
      }
      if (local.sse < best.sse) best = std::move(local);
    }
  }
  if (!std::isfinite(best.sse))
    throw UnfittableModelError("no restart produced finite predictions for " + print_expression(tree));

  FitResult fit;
  fit.sse = best.sse;
  fit.converged = best.converged;
  fit.restarts_used = used;
  fit.theta_hat = named_parameters(tree, best.theta, std::sqrt(best.sse / static_cast<double>(n)));
  fit.log_likelihood =
      (best.sse == 0.0 && !cfg.clamp_zero_sse) ? kInf : log_likelihood_mle(n, best.sse, cfg.clamp_zero_sse);
  return fit;
}

}  // namespace bsr
