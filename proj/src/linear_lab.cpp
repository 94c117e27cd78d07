#include "rollcast/linear_lab.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>

#include "rollcast/io_util.hpp"
#include "rollcast/rng.hpp"

namespace rollcast {

namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
  if (t.rank() != 2 || t.shape()[0] != t.shape()[1]) {
    throw std::invalid_argument("linear-lab: matrices must be square rank-2");
  }
  Mat m(t.shape()[0], t.shape()[1]);
  for (std::size_t r = 0; r < t.shape()[0]; ++r)
    for (std::size_t c = 0; c < t.shape()[1]; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
  return m;
}

Tensor to_tensor(const Mat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

Mat matrix_power(const Mat& m, std::size_t p) {
  Mat out = Mat::Identity(m.rows(), m.cols());
  for (std::size_t i = 0; i < p; ++i) out = out * m;
  return out;
}

double loss_of(const Mat& theta, const Mat& phi, std::size_t L) {
  return (phi - matrix_power(theta, L)).squaredNorm();
}

Mat grad_of(const Mat& theta, const Mat& phi, std::size_t L) {
  // cache Theta^k for k = 0..L
  std::vector<Mat> pow(L + 1);
  pow[0] = Mat::Identity(theta.rows(), theta.cols());
  for (std::size_t k = 1; k <= L; ++k) pow[k] = pow[k - 1] * theta;
  Mat err = phi - pow[L];
  Mat grad = Mat::Zero(theta.rows(), theta.cols());
  for (std::size_t k = 0; k < L; ++k) {
    grad += pow[k].transpose() * err * pow[L - 1 - k].transpose();
  }
  return -2.0 * grad;
}

}  // namespace

double deep_linear_loss(const Tensor& theta, const Tensor& phi, std::size_t L) {
  if (L < 1) throw std::invalid_argument("deep_linear_loss: L must be >= 1");
  return loss_of(to_eigen(theta), to_eigen(phi), L);
}

Tensor deep_linear_grad(const Tensor& theta, const Tensor& phi, std::size_t L) {
  if (L < 1) throw std::invalid_argument("deep_linear_grad: L must be >= 1");
  return to_tensor(grad_of(to_eigen(theta), to_eigen(phi), L));
}

double eta_policy(std::size_t d, std::size_t L, const Tensor& phi, double c) {
  double phi_norm = to_eigen(phi).jacobiSvd().singularValues()(0);
  double d5 = std::pow(static_cast<double>(d), 5.0);
  double l2 = static_cast<double>(L) * static_cast<double>(L);
  return 1.0 / (3.0 * l2 * d5 * std::max(std::pow(c, 4.0), phi_norm));
}

GdTrace run_gd(const LinearLabConfig& cfg) {
  if (cfg.L < 1 || cfg.d < 1) throw std::invalid_argument("run_gd: need d,L >= 1");
  Mat phi = to_eigen(cfg.target);
  if (phi.rows() != static_cast<Eigen::Index>(cfg.d)) {
    throw std::invalid_argument("run_gd: target dimension mismatch");
  }
  Mat theta = cfg.init.empty() ? Mat::Identity(phi.rows(), phi.cols())
                               : to_eigen(cfg.init);
  Mat eye = Mat::Identity(phi.rows(), phi.cols());

  GdTrace trace;
  double r0 = (theta - eye).jacobiSvd().singularValues()(0);
  double c = 1.0 + r0 + cfg.eta_slack;
  trace.eta = cfg.eta > 0 ? cfg.eta : eta_policy(cfg.d, cfg.L, cfg.target, c);
  trace.initial_loss = loss_of(theta, phi, cfg.L);

  long stride = cfg.record_stride > 0
                    ? cfg.record_stride
                    : std::max<long>(1, cfg.max_iters / 10000);
  auto record = [&](long it, double loss, const Mat& th, double gnorm) {
    trace.iters.push_back(it);
    trace.loss.push_back(loss);
    trace.radius.push_back((th - eye).jacobiSvd().singularValues()(0));
    trace.grad_norm.push_back(gnorm);
  };

  double loss = trace.initial_loss;
  if (loss <= cfg.rel_tol * std::max(trace.initial_loss, 1e-300) || loss == 0.0) {
    // already at the target (e.g. Phi = I with identity init)
    record(0, loss, theta, 0.0);
    trace.status = GdTrace::Status::Converged;
    trace.final_loss = loss;
    return trace;
  }

  for (long it = 0; it < cfg.max_iters; ++it) {
    Mat grad = grad_of(theta, phi, cfg.L);
    double gnorm = grad.norm();
    if (it % stride == 0) record(it, loss, theta, gnorm);
    theta -= trace.eta * grad;
    loss = loss_of(theta, phi, cfg.L);
    trace.iterations = it + 1;
    if (!std::isfinite(loss) || loss > cfg.diverge_factor * trace.initial_loss) {
      trace.status = GdTrace::Status::Diverged;
      trace.final_loss = loss;
      record(trace.iterations, loss, theta, gnorm);
      return trace;
    }
    if (loss <= cfg.rel_tol * trace.initial_loss) {
      trace.status = GdTrace::Status::Converged;
      trace.final_loss = loss;
      record(trace.iterations, loss, theta, gnorm);
      return trace;
    }
  }
  trace.status = GdTrace::Status::Budget;
  trace.final_loss = loss;
  record(trace.iterations, loss, theta, 0.0);
  return trace;
}

GradientBoundReport check_gradient_bound(const Tensor& theta, const Tensor& phi,
                                         std::size_t L) {
  GradientBoundReport rep;
  Mat th = to_eigen(theta);
  rep.loss = loss_of(th, to_eigen(phi), L);
  if (!(rep.loss > 0.0)) {
    throw std::invalid_argument("check_gradient_bound: requires l(Theta) > 0");
  }
  rep.grad_sq_norm = grad_of(th, to_eigen(phi), L).squaredNorm();
  auto sv = th.jacobiSvd().singularValues();
  rep.sigma_min = sv(sv.size() - 1);
  double l2 = 4.0 * static_cast<double>(L) * static_cast<double>(L) * rep.loss;
  rep.lhs_ratio = rep.grad_sq_norm / l2;
  rep.rhs_factor = 1.0 - rep.sigma_min;
  rep.holds = rep.lhs_ratio >= rep.rhs_factor;
  return rep;
}

std::vector<PhaseCell> stability_sweep(const std::vector<std::size_t>& depths,
                                       const std::vector<double>& initial_losses,
                                       std::size_t d, long base_iters,
                                       double eta_slack, std::uint64_t seed) {
  // one seeded direction shared by every cell so the frontier is comparable
  Rng rng(Rng::derive(seed, 0x11ABULL));
  Tensor g({d, d});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.normal();
  double gnorm = g.norm2();

  std::vector<PhaseCell> cells;
  for (std::size_t L : depths) {
    for (double loss0 : initial_losses) {
      LinearLabConfig cfg;
      cfg.d = d;
      cfg.L = L;
      cfg.eta_slack = eta_slack;
      cfg.max_iters = base_iters * static_cast<long>(L);
      Tensor phi({d, d});
      double s = std::sqrt(loss0) / gnorm;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          phi.at(i, j) = (i == j ? 1.0 : 0.0) + s * g.at(i, j);
      cfg.target = phi;
      GdTrace trace = run_gd(cfg);
      cells.push_back({L, loss0, trace.eta, trace.status, trace.iterations,
                       trace.final_loss});
    }
  }
  return cells;
}

namespace {
const char* status_str(GdTrace::Status s) {
  switch (s) {
    case GdTrace::Status::Converged: return "converged";
    case GdTrace::Status::Diverged: return "diverged";
    case GdTrace::Status::Budget: return "budget";
  }
  return "?";
}
}  // namespace

void write_phase_csv(const std::string& path, const std::vector<PhaseCell>& cells) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FileFormatError("cannot open phase csv for writing: " + path);
  os << "L,initial_loss,eta,status,iterations,final_loss\n";
  os.precision(17);
  for (const PhaseCell& c : cells) {
    os << c.L << ',' << c.initial_loss << ',' << c.eta << ',' << status_str(c.status)
       << ',' << c.iterations << ',' << c.final_loss << '\n';
  }
}

void write_trace_csv(const std::string& path, const GdTrace& trace) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FileFormatError("cannot open trace csv for writing: " + path);
  os << "iteration,loss,radius,grad_norm\n";
  os.precision(17);
  for (std::size_t i = 0; i < trace.loss.size(); ++i) {
    os << trace.iters[i] << ',' << trace.loss[i] << ',' << trace.radius[i] << ','
       << trace.grad_norm[i] << '\n';
  }
}

std::vector<std::pair<std::size_t, double>> convergence_frontier(
    const std::vector<PhaseCell>& cells) {
  std::map<std::size_t, double> best;
  for (const PhaseCell& c : cells) {
    best.try_emplace(c.L, -1.0);
    if (c.status == GdTrace::Status::Converged) {
      best[c.L] = std::max(best[c.L], c.initial_loss);
    }
  }
  return {best.begin(), best.end()};
}

}  // namespace rollcast
