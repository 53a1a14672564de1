#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace stsurro {

using Eigen::Index;

struct GpFitOptions {
    int restarts = 8;
    int max_iters = 100;
    uint64_t seed = 0;
};

struct GpPrediction {
    double mean = 0;
    double std = 0;
};

// Gaussian-process regressor with an anisotropic squared-exponential (ARD)
// kernel plus additive noise, zero prior mean on standardized targets.
// Hyperparameters are chosen by maximizing the log marginal likelihood with
// a multi-start BFGS using analytic gradients.
class GpModel {
public:
    GpPrediction predict(const Eigen::Vector4d& input) const;
    GpPrediction predict(double h, double v, double r, double t) const {
        return predict(Eigen::Vector4d(h, v, r, t));
    }

    bool is_constant() const { return constant_; }
    double log_marginal() const { return log_marginal_; }
    const Eigen::Vector4d& length_scales() const { return ell_; }
    double signal_variance() const { return signal_var_; }
    double noise_variance() const { return noise_var_; }
    double jitter() const { return jitter_; }
    uint64_t training_hash() const { return train_hash_; }
    Index training_size() const { return x_.rows(); }
    const Eigen::MatrixXd& normalized_inputs() const { return x_; }
    const Eigen::VectorXd& standardized_targets() const { return y_; }
    double target_mean() const { return y_mean_; }
    double target_std() const { return y_std_; }

    // Log marginal likelihood of accepted optimizer steps, best restart.
    const std::vector<double>& objective_trace() const { return trace_; }

private:
    friend GpModel fit_gp(const Eigen::MatrixXd&, const Eigen::VectorXd&, const GpFitOptions&);
    friend struct LooResult loo_from_model(const GpModel&);
    friend struct LooResult loo_validate(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                         const GpFitOptions&);
    friend void save_gp(const GpModel&, const std::filesystem::path&);
    friend GpModel load_gp(const std::filesystem::path&);

    Eigen::MatrixXd x_;  // M x 4, normalized to [0,1]
    Eigen::VectorXd y_;  // standardized
    Eigen::Vector4d ell_ = Eigen::Vector4d::Ones();
    double signal_var_ = 1, noise_var_ = 1e-4, jitter_ = 0;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
    Eigen::RowVector4d in_lo_ = Eigen::RowVector4d::Zero();
    Eigen::RowVector4d in_span_ = Eigen::RowVector4d::Ones();
    double y_mean_ = 0, y_std_ = 1;
    bool constant_ = false;
    double constant_std_ = 0;
    double log_marginal_ = 0;
    uint64_t train_hash_ = 0;
    std::vector<double> trace_;
};

// inputs: M x 4 raw (h, v, r, t); targets: length M. Inputs are min-max
// normalized and targets standardized internally. Targets with zero variance
// yield a constant model with noise-floor uncertainty.
GpModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
               const GpFitOptions& opts = {});

struct LooPoint {
    double actual = 0;
    double predicted = 0;
    double std = 0;
};

struct LooResult {
    std::vector<LooPoint> points;
    double slope = 0;      // least-squares line through (actual, predicted)
    double intercept = 0;
    double r2 = 0;
};

// Leave-one-out validation via the closed-form downdate of the factorized
// kernel system (hyperparameters from the full fit), not M refits.
LooResult loo_validate(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                       const GpFitOptions& opts = {});

// Same downdate applied to an already-fitted model.
LooResult loo_from_model(const GpModel& model);

// Log marginal likelihood and its gradient with respect to
// (log ell_0..3, log signal_std, log noise_std); exposed for testing the
// analytic gradients against finite differences.
double gp_log_marginal(const Eigen::MatrixXd& inputs_normalized,
                       const Eigen::VectorXd& targets_standardized,
                       const Eigen::VectorXd& log_params, Eigen::VectorXd* grad);

void save_gp(const GpModel& model, const std::filesystem::path& path);
GpModel load_gp(const std::filesystem::path& path);

}  // namespace stsurro
