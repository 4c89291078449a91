#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "msset/data.hpp"

namespace msset {

// Marginal covariance V_i = Delta_i + Omega of one study's outcome vector:
// entry (j,k) is s_j s_k rho_w(j,k) + tau_j tau_k rho_b(j,k).
// Throws ComputationError if the assembled matrix is not positive
// semidefinite (inconsistent correlation inputs).
Eigen::MatrixXd marginal_covariance(const ModelParams& params, const Eigen::VectorXd& s_row);

// Draws m complete studies from the random-effects model. Pure function of
// (params, m, seed): repeated calls are bit-identical. Study ids are
// id_prefix + 1-based index.
MetaDataset generate_dataset(const ModelParams& params, int m, std::uint64_t seed,
                             const std::string& id_prefix = "s");

// Report-only sanity scan: non-finite values, se <= 0, outcomes reported by
// fewer than 3 studies, duplicate ids, studies with no measurements,
// malformed count tables. Empty report iff the dataset is usable.
ValidationReport validate_dataset(const MetaDataset& data);

}  // namespace msset
