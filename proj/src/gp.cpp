#include "stsurro/gp.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

namespace {

constexpr int kDim = 4;
constexpr int kParams = kDim + 2;  // log ell x4, log signal std, log noise std
constexpr double kPi = 3.14159265358979323846;

// Successive jitter levels tried when the kernel matrix fails to factorize;
// near-duplicate inputs (adjacent timesteps) make this necessary.
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

struct KernelWork {
    // Per-dimension squared differences, fixed for a given training set.
    std::vector<Eigen::MatrixXd> d2;

    explicit KernelWork(const Eigen::MatrixXd& x) {
        d2.reserve(kDim);
        for (int d = 0; d < kDim; ++d) {
            Eigen::VectorXd c = x.col(d);
            Eigen::MatrixXd diff = c.replicate(1, x.rows()) - c.transpose().replicate(x.rows(), 1);
            d2.push_back(diff.cwiseProduct(diff));
        }
    }

    Eigen::MatrixXd correlation(const Eigen::Vector4d& ell) const {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d2[0].rows(), d2[0].cols());
        for (int d = 0; d < kDim; ++d) q += d2[static_cast<size_t>(d)] / (ell[d] * ell[d]);
        return (-0.5 * q).array().exp();
    }
};

struct Likelihood {
    double value = -std::numeric_limits<double>::infinity();
    double jitter = 0;
    bool ok = false;
    Eigen::LLT<Eigen::MatrixXd> chol;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd kc;  // signal_var * correlation, kept for gradients
};

Eigen::Vector4d ell_of(const Eigen::VectorXd& p) {
    return p.head(kDim).array().exp();
}

Likelihood evaluate(const KernelWork& work, const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                    bool keep_kc) {
    const Index m = y.size();
    Likelihood out;
    const Eigen::Vector4d ell = ell_of(p);
    const double sf2 = std::exp(2 * p[kDim]);
    const double sn2 = std::exp(2 * p[kDim + 1]);

    Eigen::MatrixXd kc = sf2 * work.correlation(ell);
    double jitter = 0;
    while (true) {
        Eigen::MatrixXd k = kc;
        k.diagonal().array() += sn2 + jitter;
        out.chol.compute(k);
        if (out.chol.info() == Eigen::Success) break;
        jitter = jitter == 0 ? kJitterStart : jitter * 10;
        if (jitter > kJitterMax) return out;  // ok stays false
    }
    out.jitter = jitter;
    out.alpha = out.chol.solve(y);
    double log_det = 0;
    for (Index i = 0; i < m; ++i) log_det += std::log(out.chol.matrixL()(i, i));
    out.value = -0.5 * y.dot(out.alpha) - log_det - 0.5 * static_cast<double>(m) * std::log(2 * kPi);
    out.ok = std::isfinite(out.value);
    if (keep_kc) out.kc = std::move(kc);
    return out;
}

// d(logL)/d(theta_j) = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta_j).
Eigen::VectorXd gradient(const KernelWork& work, const Likelihood& lik, const Eigen::VectorXd& p) {
    const Index m = lik.alpha.size();
    const double sn2 = std::exp(2 * p[kDim + 1]);
    const Eigen::Vector4d ell = ell_of(p);

    Eigen::MatrixXd kinv = lik.chol.solve(Eigen::MatrixXd::Identity(m, m));
    Eigen::MatrixXd a = lik.alpha * lik.alpha.transpose() - kinv;

    Eigen::VectorXd g(kParams);
    Eigen::MatrixXd akc = a.cwiseProduct(lik.kc);
    for (int d = 0; d < kDim; ++d)
        g[d] = 0.5 * akc.cwiseProduct(work.d2[static_cast<size_t>(d)]).sum() / (ell[d] * ell[d]);
    g[kDim] = akc.sum();               // 1/2 tr(A * 2 kc)
    g[kDim + 1] = sn2 * a.trace();     // 1/2 tr(A * 2 sn2 I)
    return g;
}

struct Bounds {
    Eigen::VectorXd lo, hi;
};

Bounds param_bounds() {
    Bounds b;
    b.lo.resize(kParams);
    b.hi.resize(kParams);
    for (int d = 0; d < kDim; ++d) {
        b.lo[d] = std::log(1e-3);
        b.hi[d] = std::log(1e3);
    }
    b.lo[kDim] = std::log(1e-4);
    b.hi[kDim] = std::log(1e3);
    b.lo[kDim + 1] = std::log(1e-6);
    b.hi[kDim + 1] = std::log(1e1);
    return b;
}

Eigen::VectorXd clamp_params(Eigen::VectorXd p, const Bounds& b) {
    for (int i = 0; i < kParams; ++i) p[i] = std::clamp(p[i], b.lo[i], b.hi[i]);
    return p;
}

struct OptResult {
    Eigen::VectorXd p;
    double value = -std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

// BFGS ascent on the log marginal likelihood with Armijo backtracking;
// steps are projected into the parameter box.
OptResult maximize(const KernelWork& work, const Eigen::VectorXd& y, Eigen::VectorXd p0,
                   int max_iters) {
    const Bounds bounds = param_bounds();
    OptResult res;
    res.p = clamp_params(std::move(p0), bounds);

    Likelihood lik = evaluate(work, y, res.p, true);
    if (!lik.ok) return res;
    res.value = lik.value;
    res.trace.push_back(lik.value);
    Eigen::VectorXd g = gradient(work, lik, res.p);

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(kParams, kParams);
    for (int iter = 0; iter < max_iters; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() < 1e-7) break;
        Eigen::VectorXd dir = h * g;
        if (dir.dot(g) <= 0) {  // not an ascent direction; reset
            h.setIdentity();
            dir = g;
        }

        double step = 1.0;
        Eigen::VectorXd p_new;
        Likelihood lik_new;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            p_new = clamp_params(res.p + step * dir, bounds);
            lik_new = evaluate(work, y, p_new, true);
            if (lik_new.ok && lik_new.value >= res.value + 1e-4 * g.dot(p_new - res.p)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || lik_new.value <= res.value) break;

        Eigen::VectorXd g_new = gradient(work, lik_new, p_new);
        Eigen::VectorXd s = p_new - res.p;
        Eigen::VectorXd dg = g - g_new;  // = -(grad_new - grad) for ascent
        double sy = s.dot(dg);
        if (sy > 1e-12 * s.norm() * dg.norm()) {
            Eigen::VectorXd hy = h * dg;
            h += ((sy + dg.dot(hy)) / (sy * sy)) * (s * s.transpose()) -
                 (hy * s.transpose() + s * hy.transpose()) / sy;
        } else {
            h.setIdentity();
        }

        res.p = p_new;
        res.value = lik_new.value;
        res.trace.push_back(res.value);
        g = std::move(g_new);
        if (s.lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    return res;
}

uint64_t hash_training(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
    uint64_t h = fnv1a(inputs.data(), sizeof(double) * static_cast<size_t>(inputs.size()));
    return fnv1a(targets.data(), sizeof(double) * static_cast<size_t>(targets.size()), h);
}

double uniform01(uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace

double gp_log_marginal(const Eigen::MatrixXd& inputs_normalized,
                       const Eigen::VectorXd& targets_standardized,
                       const Eigen::VectorXd& log_params, Eigen::VectorXd* grad) {
    if (log_params.size() != kParams) throw DimensionMismatchError("expected 6 log-parameters");
    KernelWork work(inputs_normalized);
    Likelihood lik = evaluate(work, targets_standardized, log_params, grad != nullptr);
    if (!lik.ok) throw FactorizationFailureError("kernel matrix is not positive definite");
    if (grad) *grad = gradient(work, lik, log_params);
    return lik.value;
}

GpModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
               const GpFitOptions& opts) {
    const Index m = inputs.rows();
    if (m < 2) throw TooFewPointsError("GP fit needs at least 2 points");
    if (inputs.cols() != kDim) throw DimensionMismatchError("GP inputs must be M x 4");
    if (targets.size() != m) throw DimensionMismatchError("targets do not match inputs");
    if (!inputs.allFinite() || !targets.allFinite())
        throw NonFiniteInputError("GP training data contains non-finite values");

    GpModel model;
    model.train_hash_ = hash_training(inputs, targets);
    model.in_lo_ = inputs.colwise().minCoeff();
    Eigen::RowVector4d hi = inputs.colwise().maxCoeff();
    model.in_span_ = hi - model.in_lo_;
    for (int d = 0; d < kDim; ++d)
        if (model.in_span_[d] <= 0) model.in_span_[d] = 1;
    model.x_ = (inputs.rowwise() - model.in_lo_).array().rowwise() / model.in_span_.array();

    model.y_mean_ = targets.mean();
    model.y_std_ = std::sqrt((targets.array() - model.y_mean_).square().mean());
    if (model.y_std_ <= 0 ||
        model.y_std_ < 1e-14 * std::max(1.0, std::abs(model.y_mean_))) {
        // Degenerate targets: constant model with a noise-floor band.
        model.constant_ = true;
        model.y_std_ = 1;
        model.constant_std_ = 1e-8 * std::max(1.0, std::abs(model.y_mean_));
        return model;
    }
    model.y_ = (targets.array() - model.y_mean_) / model.y_std_;

    KernelWork work(model.x_);
    OptResult best;
    uint64_t state = mix_seed(opts.seed, 0x6770ULL);
    for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
        Eigen::VectorXd p0(kParams);
        if (restart == 0) {
            p0 << std::log(0.5), std::log(0.5), std::log(0.5), std::log(0.5), std::log(1.0),
                std::log(0.1);
        } else {
            // Length-scales log-uniform in [1e-2, 10] of the normalized range.
            for (int d = 0; d < kDim; ++d)
                p0[d] = std::log(1e-2) + uniform01(state) * (std::log(10.0) - std::log(1e-2));
            p0[kDim] = std::log(0.3) + uniform01(state) * (std::log(3.0) - std::log(0.3));
            p0[kDim + 1] = std::log(1e-4) + uniform01(state) * (std::log(0.5) - std::log(1e-4));
        }
        OptResult r = maximize(work, model.y_, p0, opts.max_iters);
        if (r.value > best.value) best = std::move(r);
    }
    if (!std::isfinite(best.value))
        throw FactorizationFailureError("no GP hyperparameter restart produced a usable fit");

    model.ell_ = ell_of(best.p);
    model.signal_var_ = std::exp(2 * best.p[kDim]);
    model.noise_var_ = std::exp(2 * best.p[kDim + 1]);
    model.log_marginal_ = best.value;
    model.trace_ = std::move(best.trace);

    Likelihood lik = evaluate(work, model.y_, best.p, false);
    if (!lik.ok) throw FactorizationFailureError("kernel factorization failed at the optimum");
    model.jitter_ = lik.jitter;
    model.chol_ = std::move(lik.chol);
    model.alpha_ = std::move(lik.alpha);
    return model;
}

GpPrediction GpModel::predict(const Eigen::Vector4d& input) const {
    if (constant_) return {y_mean_, constant_std_};
    Eigen::RowVector4d xn =
        (input.transpose() - in_lo_).array() / in_span_.array();
    const Index m = x_.rows();
    Eigen::VectorXd ks(m);
    for (Index i = 0; i < m; ++i) {
        double q = 0;
        for (int d = 0; d < kDim; ++d) {
            double diff = (xn[d] - x_(i, d)) / ell_[d];
            q += diff * diff;
        }
        ks[i] = signal_var_ * std::exp(-0.5 * q);
    }
    double mean_n = ks.dot(alpha_);
    Eigen::VectorXd v = chol_.matrixL().solve(ks);
    double var_n = signal_var_ + noise_var_ + jitter_ - v.squaredNorm();
    var_n = std::max(var_n, 0.0);
    return {y_mean_ + y_std_ * mean_n, y_std_ * std::sqrt(var_n)};
}

namespace {

void finish_line_fit(LooResult& res) {
    const auto& pts = res.points;
    double ma = 0, mp = 0;
    for (const auto& p : pts) {
        ma += p.actual;
        mp += p.predicted;
    }
    ma /= static_cast<double>(pts.size());
    mp /= static_cast<double>(pts.size());
    double cov = 0, var_a = 0, ss_res = 0, ss_tot = 0;
    for (const auto& p : pts) {
        cov += (p.actual - ma) * (p.predicted - mp);
        var_a += (p.actual - ma) * (p.actual - ma);
        ss_res += (p.predicted - p.actual) * (p.predicted - p.actual);
        ss_tot += (p.actual - ma) * (p.actual - ma);
    }
    res.slope = var_a > 0 ? cov / var_a : 0.0;
    res.intercept = mp - res.slope * ma;
    res.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace

LooResult loo_from_model(const GpModel& model) {
    LooResult res;
    if (model.is_constant()) {
        const Index m = model.x_.rows() > 0 ? model.x_.rows() : 0;
        for (Index i = 0; i < m; ++i)
            res.points.push_back({model.y_mean_, model.y_mean_, model.constant_std_});
        if (!res.points.empty()) finish_line_fit(res);
        return res;
    }
    const Index m = model.y_.size();
    Eigen::MatrixXd kinv = model.chol_.solve(Eigen::MatrixXd::Identity(m, m));
    for (Index i = 0; i < m; ++i) {
        double pred_n = model.y_[i] - model.alpha_[i] / kinv(i, i);
        double var_n = 1.0 / kinv(i, i);
        res.points.push_back({model.y_mean_ + model.y_std_ * model.y_[i],
                              model.y_mean_ + model.y_std_ * pred_n,
                              model.y_std_ * std::sqrt(std::max(var_n, 0.0))});
    }
    finish_line_fit(res);
    return res;
}

LooResult loo_validate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                       const GpFitOptions& opts) {
    if (inputs.rows() < 3) throw TooFewPointsError("leave-one-out needs at least 3 points");
    GpModel model = fit_gp(inputs, targets, opts);
    if (model.is_constant()) {
        LooResult res;
        for (Index i = 0; i < inputs.rows(); ++i)
            res.points.push_back({targets[i], model.y_mean_, model.constant_std_});
        finish_line_fit(res);
        return res;
    }
    return loo_from_model(model);
}

void save_gp(const GpModel& model, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write GP model " + path.string());
    os << "format = stsurro-gp\n";
    os << "constant = " << (model.constant_ ? 1 : 0) << "\n";
    os << "y_mean = " << format_double(model.y_mean_) << "\n";
    os << "y_std = " << format_double(model.y_std_) << "\n";
    os << "constant_std = " << format_double(model.constant_std_) << "\n";
    os << "ell =";
    for (int d = 0; d < kDim; ++d) os << " " << format_double(model.ell_[d]);
    os << "\n";
    os << "signal_var = " << format_double(model.signal_var_) << "\n";
    os << "noise_var = " << format_double(model.noise_var_) << "\n";
    os << "jitter = " << format_double(model.jitter_) << "\n";
    os << "in_lo =";
    for (int d = 0; d < kDim; ++d) os << " " << format_double(model.in_lo_[d]);
    os << "\n";
    os << "in_span =";
    for (int d = 0; d < kDim; ++d) os << " " << format_double(model.in_span_[d]);
    os << "\n";
    os << "log_marginal = " << format_double(model.log_marginal_) << "\n";
    os << "train_hash = " << to_hex(model.train_hash_) << "\n";
    os << "m = " << model.x_.rows() << "\n";
    for (Index i = 0; i < model.x_.rows(); ++i) {
        os << "row." << i << " =";
        for (int d = 0; d < kDim; ++d) os << " " << format_double(model.x_(i, d));
        os << " " << format_double(model.constant_ ? 0.0 : model.y_[i]) << "\n";
    }
    if (!os) throw IoError("short write of GP model");
}

GpModel load_gp(const std::filesystem::path& path) {
    auto kv = read_manifest(path);
    if (kv["format"] != "stsurro-gp") throw IoError(path.string() + " is not a GP model");
    GpModel model;
    auto vec4 = [&](const std::string& key) {
        std::istringstream is(kv.at(key));
        Eigen::RowVector4d v;
        std::string tok;
        for (int d = 0; d < kDim; ++d) {
            is >> tok;
            v[d] = parse_double(tok);
        }
        return v;
    };
    model.constant_ = kv.at("constant") == "1";
    model.y_mean_ = parse_double(kv.at("y_mean"));
    model.y_std_ = parse_double(kv.at("y_std"));
    model.constant_std_ = parse_double(kv.at("constant_std"));
    model.ell_ = vec4("ell").transpose();
    model.signal_var_ = parse_double(kv.at("signal_var"));
    model.noise_var_ = parse_double(kv.at("noise_var"));
    model.jitter_ = parse_double(kv.at("jitter"));
    model.in_lo_ = vec4("in_lo");
    model.in_span_ = vec4("in_span");
    model.log_marginal_ = parse_double(kv.at("log_marginal"));
    model.train_hash_ = from_hex(kv.at("train_hash"));
    Index m = std::stoll(kv.at("m"));
    model.x_.resize(m, kDim);
    model.y_.resize(m);
    for (Index i = 0; i < m; ++i) {
        std::istringstream is(kv.at("row." + std::to_string(i)));
        std::string tok;
        for (int d = 0; d < kDim; ++d) {
            is >> tok;
            model.x_(i, d) = parse_double(tok);
        }
        is >> tok;
        model.y_[i] = parse_double(tok);
    }
    if (!model.constant_ && m > 0) {
        KernelWork work(model.x_);
        Eigen::MatrixXd k = model.signal_var_ * work.correlation(model.ell_);
        k.diagonal().array() += model.noise_var_ + model.jitter_;
        model.chol_.compute(k);
        if (model.chol_.info() != Eigen::Success)
            throw FactorizationFailureError("reloaded GP kernel failed to factorize");
        model.alpha_ = model.chol_.solve(model.y_);
    }
    return model;
}

}  // namespace stsurro
