#include "helioaim/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "helioaim/error.hpp"

namespace helioaim::lp {

int Problem::add_var(double lb, double ub, double cost) {
    objective.push_back(cost);
    lower.push_back(lb);
    upper.push_back(ub);
    return num_vars() - 1;
}

void Problem::add_row(std::vector<std::pair<int, double>> terms, Sense sense, double rhs) {
    rows.push_back({std::move(terms), sense, rhs});
}

const char* to_string(Status s) noexcept {
    switch (s) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::IterationLimit: return "iteration-limit";
    }
    return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, Free };

constexpr double kPivotTol = 1e-9;
constexpr int kRefactorPeriod = 200;
constexpr int kStallLimit = 50;

class Simplex {
public:
    Simplex(const Problem& p, const Options& o) : opt_(o) {
        m_ = static_cast<int>(p.rows.size());
        n_ = p.num_vars();
        cols_ = n_ + 2 * m_;
        if (static_cast<int>(p.lower.size()) != n_ || static_cast<int>(p.upper.size()) != n_)
            fail(ErrorKind::Shape, "lp: bound vectors do not match variable count");

        A_ = Eigen::MatrixXd::Zero(m_, cols_);
        b_ = Eigen::VectorXd::Zero(m_);
        lb_.assign(cols_, 0.0);
        ub_.assign(cols_, 0.0);
        x_.assign(cols_, 0.0);
        state_.assign(cols_, VarState::AtLower);
        basis_.assign(m_, -1);
        objective_ = p.objective;

        for (int j = 0; j < n_; ++j) {
            lb_[j] = p.lower[j];
            ub_[j] = p.upper[j];
            if (std::isfinite(lb_[j])) {
                state_[j] = VarState::AtLower;
                x_[j] = lb_[j];
            } else if (std::isfinite(ub_[j])) {
                state_[j] = VarState::AtUpper;
                x_[j] = ub_[j];
            } else {
                state_[j] = VarState::Free;
                x_[j] = 0.0;
            }
        }

        for (int i = 0; i < m_; ++i) {
            const Row& row = p.rows[i];
            for (const auto& [j, a] : row.terms) {
                if (j < 0 || j >= n_) fail(ErrorKind::Shape, "lp: row references unknown variable");
                A_(i, j) += a;
            }
            b_(i) = row.rhs;
            const int slack = n_ + i;
            A_(i, slack) = 1.0;
            switch (row.sense) {
                case Sense::LessEqual: lb_[slack] = 0.0; ub_[slack] = kInf; break;
                case Sense::GreaterEqual: lb_[slack] = -kInf; ub_[slack] = 0.0; break;
                case Sense::Equal: lb_[slack] = 0.0; ub_[slack] = 0.0; break;
            }
        }

        // Initial basis: slack where its value is within bounds, otherwise a
        // sign-matched artificial.
        phase_one_ = false;
        for (int i = 0; i < m_; ++i) {
            double r = b_(i);
            for (int j = 0; j < n_; ++j)
                if (A_(i, j) != 0.0) r -= A_(i, j) * x_[j];
            const int slack = n_ + i;
            const int art = n_ + m_ + i;
            if (r >= lb_[slack] && r <= ub_[slack]) {
                basis_[i] = slack;
                state_[slack] = VarState::Basic;
                x_[slack] = r;
                state_[art] = VarState::AtLower;  // fixed at [0, 0]
            } else {
                const double s = r > 0.0 ? 1.0 : -1.0;
                // Slack sits at the bound nearest to r.
                x_[slack] = (r > ub_[slack]) ? ub_[slack] : lb_[slack];
                state_[slack] = (r > ub_[slack]) ? VarState::AtUpper : VarState::AtLower;
                A_(i, art) = s;
                ub_[art] = kInf;
                basis_[i] = art;
                state_[art] = VarState::Basic;
                x_[art] = std::abs(r - x_[slack]);
                phase_one_ = true;
            }
        }
        refactor();
    }

    Result run() {
        Result res;
        const int limit = opt_.max_iterations > 0 ? opt_.max_iterations : 20 * (m_ + cols_) + 1000;

        if (phase_one_) {
            std::vector<double> cost(cols_, 0.0);
            for (int i = 0; i < m_; ++i) cost[n_ + m_ + i] = (ub_[n_ + m_ + i] > 0.0) ? 1.0 : 0.0;
            const Status s = iterate(cost, limit);
            res.iterations = iterations_;
            if (s == Status::IterationLimit) {
                res.status = s;
                return res;
            }
            refactor();
            double infeasibility = 0.0;
            for (int i = 0; i < m_; ++i) infeasibility += std::abs(x_[n_ + m_ + i]);
            const double scale = std::max(1.0, b_.cwiseAbs().maxCoeff());
            if (infeasibility > 1e-7 * scale) {
                res.status = Status::Infeasible;
                return res;
            }
        }
        for (int i = 0; i < m_; ++i) {
            const int art = n_ + m_ + i;
            ub_[art] = 0.0;
            if (state_[art] != VarState::Basic) {
                state_[art] = VarState::AtLower;
                x_[art] = 0.0;
            }
        }

        std::vector<double> cost(cols_, 0.0);
        for (int j = 0; j < n_; ++j) cost[j] = -objective_[j];
        const Status s = iterate(cost, limit);
        res.iterations = iterations_;
        res.status = s;
        if (s != Status::Optimal) return res;

        refactor();
        res.x.assign(x_.begin(), x_.begin() + n_);
        for (int j = 0; j < n_; ++j) {
            // Basic values can sit a rounding error outside their bounds.
            if (std::isfinite(lb_[j]) && res.x[j] < lb_[j]) res.x[j] = lb_[j];
            if (std::isfinite(ub_[j]) && res.x[j] > ub_[j]) res.x[j] = ub_[j];
        }
        res.objective = 0.0;
        for (int j = 0; j < n_; ++j) res.objective += objective_[j] * res.x[j];
        return res;
    }

private:
    void refactor() {
        if (m_ == 0) return;
        Eigen::MatrixXd B(m_, m_);
        for (int i = 0; i < m_; ++i) B.col(i) = A_.col(basis_[i]);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        T_ = lu.solve(A_);
        Eigen::VectorXd rhs = b_;
        for (int j = 0; j < cols_; ++j)
            if (state_[j] != VarState::Basic && x_[j] != 0.0) rhs -= A_.col(j) * x_[j];
        const Eigen::VectorXd xb = lu.solve(rhs);
        for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb(i);
    }

    void reduced_costs(const std::vector<double>& cost) {
        d_ = Eigen::Map<const Eigen::VectorXd>(cost.data(), cols_);
        if (m_ == 0) return;
        Eigen::VectorXd cb(m_);
        for (int i = 0; i < m_; ++i) cb(i) = cost[basis_[i]];
        d_.noalias() -= T_.transpose() * cb;
    }

    Status iterate(const std::vector<double>& cost, int limit) {
        reduced_costs(cost);
        int stalled = 0;
        int since_refactor = 0;
        Eigen::VectorXd alpha(m_);

        while (true) {
            if (iterations_ >= limit) return Status::IterationLimit;
            if (since_refactor >= kRefactorPeriod) {
                refactor();
                reduced_costs(cost);
                since_refactor = 0;
            }

            // Pricing: Dantzig, Bland's rule while stalled.
            const bool bland = stalled > kStallLimit;
            int q = -1;
            double dir = 0.0, best = 0.0;
            for (int j = 0; j < cols_; ++j) {
                const VarState st = state_[j];
                if (st == VarState::Basic || lb_[j] == ub_[j]) continue;
                const double dj = d_(j);
                double score = 0.0, dj_dir = 0.0;
                if (st == VarState::AtLower && dj < -opt_.optimality_tol) {
                    score = -dj;
                    dj_dir = 1.0;
                } else if (st == VarState::AtUpper && dj > opt_.optimality_tol) {
                    score = dj;
                    dj_dir = -1.0;
                } else if (st == VarState::Free && std::abs(dj) > opt_.optimality_tol) {
                    score = std::abs(dj);
                    dj_dir = dj < 0.0 ? 1.0 : -1.0;
                } else {
                    continue;
                }
                if (bland) {
                    q = j;
                    dir = dj_dir;
                    break;
                }
                if (score > best) {
                    best = score;
                    q = j;
                    dir = dj_dir;
                }
            }
            if (q < 0) return Status::Optimal;

            for (int i = 0; i < m_; ++i) alpha(i) = T_(i, q);

            // Harris ratio test.
            const double flip = (std::isfinite(lb_[q]) && std::isfinite(ub_[q])) ? ub_[q] - lb_[q] : kInf;
            double relaxed = flip;
            for (int i = 0; i < m_; ++i) {
                const double delta = -dir * alpha(i);
                if (std::abs(delta) <= kPivotTol) continue;
                const int bv = basis_[i];
                if (delta < 0.0 && std::isfinite(lb_[bv]))
                    relaxed = std::min(relaxed, (x_[bv] - lb_[bv] + opt_.feasibility_tol) / -delta);
                else if (delta > 0.0 && std::isfinite(ub_[bv]))
                    relaxed = std::min(relaxed, (ub_[bv] - x_[bv] + opt_.feasibility_tol) / delta);
            }
            if (!std::isfinite(relaxed)) return Status::Unbounded;

            int r = -1;
            double theta = 0.0;
            if (flip <= relaxed) {
                theta = flip;
            } else {
                double best_pivot = 0.0;
                for (int i = 0; i < m_; ++i) {
                    const double delta = -dir * alpha(i);
                    if (std::abs(delta) <= kPivotTol) continue;
                    const int bv = basis_[i];
                    double lim = kInf;
                    if (delta < 0.0 && std::isfinite(lb_[bv]))
                        lim = (x_[bv] - lb_[bv]) / -delta;
                    else if (delta > 0.0 && std::isfinite(ub_[bv]))
                        lim = (ub_[bv] - x_[bv]) / delta;
                    if (lim <= relaxed && std::abs(delta) > best_pivot) {
                        best_pivot = std::abs(delta);
                        r = i;
                        theta = std::max(lim, 0.0);
                    }
                }
                if (r < 0) return Status::Unbounded;
            }

            ++iterations_;
            stalled = (theta <= 1e-12) ? stalled + 1 : 0;

            x_[q] += dir * theta;
            for (int i = 0; i < m_; ++i) {
                const double delta = -dir * alpha(i);
                if (delta != 0.0) x_[basis_[i]] += delta * theta;
            }

            if (r < 0) {
                // Bound flip of the entering variable.
                state_[q] = (dir > 0.0) ? VarState::AtUpper : VarState::AtLower;
                x_[q] = (dir > 0.0) ? ub_[q] : lb_[q];
                continue;
            }

            const int leaving = basis_[r];
            const double delta_r = -dir * alpha(r);
            if (delta_r < 0.0) {
                state_[leaving] = VarState::AtLower;
                x_[leaving] = lb_[leaving];
            } else {
                state_[leaving] = VarState::AtUpper;
                x_[leaving] = ub_[leaving];
            }
            state_[q] = VarState::Basic;
            basis_[r] = q;
            pivot(r, q);
            ++since_refactor;
        }
    }

    void pivot(int r, int q) {
        const double p = T_(r, q);
        T_.row(r) /= p;
        for (int i = 0; i < m_; ++i) {
            if (i == r) continue;
            const double f = T_(i, q);
            if (f != 0.0) T_.row(i) -= f * T_.row(r);
        }
        const double dq = d_(q);
        if (dq != 0.0) d_ -= dq * T_.row(r).transpose();
    }

    Options opt_;
    int m_ = 0, n_ = 0, cols_ = 0;
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_;
    RowMatrix T_;
    Eigen::VectorXd d_;
    std::vector<double> lb_, ub_, x_, objective_;
    std::vector<VarState> state_;
    std::vector<int> basis_;
    bool phase_one_ = false;
    int iterations_ = 0;
};

}  // namespace

Result solve(const Problem& problem, const Options& options) {
    Simplex simplex(problem, options);
    return simplex.run();
}

}  // namespace helioaim::lp
