#include "stsurro/sampling.hpp"

#include <limits>
#include <random>

#include "stsurro/errors.hpp"

namespace stsurro {

bool InputBox::excluded(const Eigen::VectorXd& p) const {
    for (const auto& e : exclusions)
        if (e.coef_a * p[e.axis_a] + e.coef_b * p[e.axis_b] > e.bound) return true;
    return false;
}

bool InputBox::contains(const Eigen::VectorXd& p) const {
    if (p.size() != dim()) return false;
    for (int a = 0; a < dim(); ++a)
        if (p[a] < axes[a].lo || p[a] > axes[a].hi) return false;
    return !excluded(p);
}

Eigen::VectorXd InputBox::normalize(const Eigen::VectorXd& p) const {
    Eigen::VectorXd out(dim());
    for (int a = 0; a < dim(); ++a) out[a] = (p[a] - axes[a].lo) / (axes[a].hi - axes[a].lo);
    return out;
}

void InputBox::validate() const {
    if (axes.empty()) throw ConfigError("input box has no axes");
    for (const auto& a : axes)
        if (!(a.lo < a.hi)) throw ConfigError("axis " + a.name + " needs lo < hi");
    for (const auto& e : exclusions)
        if (e.axis_a < 0 || e.axis_a >= dim() || e.axis_b < 0 || e.axis_b >= dim())
            throw ConfigError("exclusion references an axis out of range");
}

InputBox default_input_box() {
    InputBox box;
    box.axes = {{"he_length", 5.0, 15.0}, {"tip_velocity", 0.6, 0.95}, {"radius", 0.125, 0.25}};
    return box;
}

namespace {

constexpr int kMaxRejects = 10000;

Eigen::VectorXd draw_candidate(const InputBox& box, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::VectorXd p(box.dim());
    for (int reject = 0; reject < kMaxRejects; ++reject) {
        for (int a = 0; a < box.dim(); ++a)
            p[a] = box.axes[a].lo + u01(rng) * (box.axes[a].hi - box.axes[a].lo);
        if (!box.excluded(p)) return p;
    }
    throw ExclusionTooTightError("rejection sampling failed " + std::to_string(kMaxRejects) +
                                 " consecutive draws");
}

}  // namespace

Eigen::MatrixXd best_candidate_extend(const Eigen::MatrixXd& existing, int m_new, int c,
                                      const InputBox& box, uint64_t seed) {
    box.validate();
    if (m_new < 1) throw ConfigError("m_new must be >= 1");
    if (c < 1) throw ConfigError("candidates-per-point must be >= 1");
    if (existing.rows() > 0 && existing.cols() != box.dim())
        throw DimensionMismatchError("existing points do not match box dimension");

    std::mt19937_64 rng(seed);
    Eigen::MatrixXd pts(existing.rows() + m_new, box.dim());
    pts.topRows(existing.rows()) = existing;

    // Accepted points in normalized coordinates, for the distance tests.
    Eigen::MatrixXd norm(pts.rows(), box.dim());
    for (Eigen::Index i = 0; i < existing.rows(); ++i)
        norm.row(i) = box.normalize(existing.row(i).transpose()).transpose();

    for (int m = 0; m < m_new; ++m) {
        const Eigen::Index accepted = existing.rows() + m;
        Eigen::VectorXd best;
        double best_score = -1;
        for (int j = 0; j < c; ++j) {
            Eigen::VectorXd cand = draw_candidate(box, rng);
            Eigen::VectorXd cn = box.normalize(cand);
            double score = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < accepted; ++i)
                score = std::min(score, (norm.row(i).transpose() - cn).norm());
            if (score > best_score) {
                best_score = score;
                best = cand;
            }
        }
        pts.row(accepted) = best.transpose();
        norm.row(accepted) = box.normalize(best).transpose();
    }
    return pts;
}

double min_pairwise_distance(const Eigen::MatrixXd& points, const InputBox& box) {
    if (points.rows() < 2) throw TooFewPointsError("need at least two points");
    Eigen::MatrixXd norm(points.rows(), points.cols());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        norm.row(i) = box.normalize(points.row(i).transpose()).transpose();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < norm.rows(); ++i)
        for (Eigen::Index j = i + 1; j < norm.rows(); ++j)
            best = std::min(best, (norm.row(i) - norm.row(j)).norm());
    return best;
}

}  // namespace stsurro
