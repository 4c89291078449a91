#include "msset/data.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace msset {

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& issue : issues) {
        if (!issue.study_id.empty()) os << "study " << issue.study_id;
        if (issue.outcome >= 0) os << " outcome " << (issue.outcome + 1);
        if (!issue.study_id.empty() || issue.outcome >= 0) os << ": ";
        os << issue.message << "\n";
    }
    return os.str();
}

namespace {

bool is_correlation_matrix(const Eigen::MatrixXd& r, std::string* why) {
    const double tol = 1e-10;
    if (r.rows() != r.cols()) {
        *why = "not square";
        return false;
    }
    if (!r.allFinite()) {
        *why = "non-finite entries";
        return false;
    }
    if ((r - r.transpose()).cwiseAbs().maxCoeff() > tol) {
        *why = "not symmetric";
        return false;
    }
    if ((r.diagonal().array() - 1.0).abs().maxCoeff() > tol) {
        *why = "diagonal not 1";
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
        *why = "not positive semidefinite";
        return false;
    }
    return true;
}

}  // namespace

void ModelParams::validate() const {
    const int j = outcome_count();
    if (j < 1) throw ValidationError("model params: need at least one outcome");
    if (tau2.size() != j || rho_between.rows() != j || rho_within.rows() != j)
        throw ValidationError("model params: dimension mismatch");
    if (!beta.allFinite()) throw ValidationError("model params: beta not finite");
    if (!tau2.allFinite() || tau2.minCoeff() < 0.0)
        throw ValidationError("model params: tau2 must be finite and >= 0");
    std::string why;
    if (!is_correlation_matrix(rho_between, &why))
        throw ValidationError("model params: rho_between " + why);
    if (!is_correlation_matrix(rho_within, &why))
        throw ValidationError("model params: rho_within " + why);
    if (s_dist.kind == StderrDistribution::Kind::fixed && s_dist.fixed_se <= 0.0)
        throw ValidationError("model params: fixed se must be > 0");
}

ModelParams ModelParams::bivariate(double beta1, double beta2, double tau2_both, double rho_w,
                                   double rho_b) {
    ModelParams p;
    p.beta = Eigen::Vector2d(beta1, beta2);
    p.tau2 = Eigen::Vector2d(tau2_both, tau2_both);
    p.rho_between = Eigen::Matrix2d{{1.0, rho_b}, {rho_b, 1.0}};
    p.rho_within = Eigen::Matrix2d{{1.0, rho_w}, {rho_w, 1.0}};
    return p;
}

ModelParams ModelParams::univariate(double beta1, double tau2_1) {
    ModelParams p;
    p.beta = Eigen::VectorXd::Constant(1, beta1);
    p.tau2 = Eigen::VectorXd::Constant(1, tau2_1);
    p.rho_between = Eigen::MatrixXd::Identity(1, 1);
    p.rho_within = Eigen::MatrixXd::Identity(1, 1);
    return p;
}

}  // namespace msset
