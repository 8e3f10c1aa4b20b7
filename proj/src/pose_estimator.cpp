#include "pvloc/pose_estimator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace pvloc {

Vec3 camera_position(const Mat3& r, const Vec3& t) { return r.transpose() * (-t); }

double reprojection_error(const Pose& pose, const CorrespondenceSet& c,
                          const CameraIntrinsics& k) {
    if (c.size() == 0) return 0.0;
    double sum_sq = 0.0;
    for (size_t i = 0; i < c.size(); ++i) {
        const Projection pr = project_point(c.world_points[i], pose, k, false);
        if (!pr.in_front) {
            sum_sq += 1e12;  // behind-camera points disqualify a candidate pose
            continue;
        }
        sum_sq += (pr.px - c.image_points[i]).squaredNorm();
    }
    return std::sqrt(sum_sq / static_cast<double>(c.size()));
}

namespace {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct EpnpWorkspace {
    int n_control = 4;
    std::vector<Vec3> control_world;          // control points in world frame
    MatX alphas;                              // n x n_control barycentric coords
    std::vector<VecX> null_vectors;           // candidate null-space vectors of M^T M
    std::vector<std::pair<int, int>> pairs;   // control point index pairs
    VecX rho;                                 // squared world distances per pair
};

/// Camera-frame control points for a given beta combination.
std::vector<Vec3> control_camera(const EpnpWorkspace& ws, const VecX& betas) {
    std::vector<Vec3> cc(ws.n_control, Vec3::Zero());
    for (int k = 0; k < betas.size(); ++k) {
        for (int j = 0; j < ws.n_control; ++j)
            cc[j] += betas[k] * ws.null_vectors[k].segment<3>(3 * j);
    }
    return cc;
}

/// Distance residuals f_p = ||cc_i - cc_j||^2 - rho_p.
VecX distance_residuals(const EpnpWorkspace& ws, const std::vector<Vec3>& cc) {
    VecX f(static_cast<int>(ws.pairs.size()));
    for (size_t p = 0; p < ws.pairs.size(); ++p) {
        const auto& [i, j] = ws.pairs[p];
        f[static_cast<int>(p)] = (cc[i] - cc[j]).squaredNorm() - ws.rho[static_cast<int>(p)];
    }
    return f;
}

void gauss_newton_refine(const EpnpWorkspace& ws, VecX& betas, int iterations) {
    const int nb = static_cast<int>(betas.size());
    const int np = static_cast<int>(ws.pairs.size());
    for (int it = 0; it < iterations; ++it) {
        const std::vector<Vec3> cc = control_camera(ws, betas);
        const VecX f = distance_residuals(ws, cc);
        MatX jac(np, nb);
        for (int p = 0; p < np; ++p) {
            const auto& [i, j] = ws.pairs[p];
            const Vec3 d = cc[i] - cc[j];
            for (int kidx = 0; kidx < nb; ++kidx) {
                const Vec3 dk = ws.null_vectors[kidx].segment<3>(3 * i) -
                                ws.null_vectors[kidx].segment<3>(3 * j);
                jac(p, kidx) = 2.0 * d.dot(dk);
            }
        }
        const VecX delta = jac.colPivHouseholderQr().solve(-f);
        betas += delta;
        if (delta.cwiseAbs().maxCoeff() < 1e-14) break;
    }
}

/// Least-squares solve of the linearized distance system restricted to the
/// given monomial columns; monomials are (k, m) pairs meaning beta_k * beta_m.
VecX solve_beta_monomials(const EpnpWorkspace& ws,
                          const std::vector<std::pair<int, int>>& monomials) {
    const int np = static_cast<int>(ws.pairs.size());
    MatX l(np, static_cast<int>(monomials.size()));
    for (int p = 0; p < np; ++p) {
        const auto& [i, j] = ws.pairs[p];
        for (size_t c = 0; c < monomials.size(); ++c) {
            const auto& [k, m] = monomials[c];
            const Vec3 dk = ws.null_vectors[k].segment<3>(3 * i) -
                            ws.null_vectors[k].segment<3>(3 * j);
            const Vec3 dm = ws.null_vectors[m].segment<3>(3 * i) -
                            ws.null_vectors[m].segment<3>(3 * j);
            const double factor = (k == m) ? 1.0 : 2.0;
            l(p, static_cast<int>(c)) = factor * dk.dot(dm);
        }
    }
    return l.colPivHouseholderQr().solve(ws.rho);
}

/// Rigid transform world -> camera from paired point clouds (Horn's method).
Pose fit_rigid_transform(const std::vector<Vec3>& world, const std::vector<Vec3>& camera) {
    Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
    const double n = static_cast<double>(world.size());
    for (size_t i = 0; i < world.size(); ++i) {
        cw += world[i];
        cc += camera[i];
    }
    cw /= n;
    cc /= n;
    Mat3 h = Mat3::Zero();
    for (size_t i = 0; i < world.size(); ++i) h += (camera[i] - cc) * (world[i] - cw).transpose();
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
    Pose pose;
    pose.R = svd.matrixU() * d * svd.matrixV().transpose();
    pose.t = cc - pose.R * cw;
    return pose;
}

/// Candidate pose from a beta vector: reconstruct camera-frame points through
/// the barycentric expansion, fix the depth sign, then fit R, t.
std::optional<Pose> pose_from_betas(const EpnpWorkspace& ws, const CorrespondenceSet& c,
                                    VecX betas) {
    std::vector<Vec3> cc = control_camera(ws, betas);
    std::vector<Vec3> points_cam(c.size());
    double depth_sum = 0.0;
    for (size_t i = 0; i < c.size(); ++i) {
        Vec3 p = Vec3::Zero();
        for (int j = 0; j < ws.n_control; ++j)
            p += ws.alphas(static_cast<int>(i), j) * cc[j];
        points_cam[i] = p;
        depth_sum += p.z();
    }
    if (depth_sum < 0.0) {
        for (auto& p : points_cam) p = -p;
    }
    for (const auto& p : points_cam)
        if (!p.allFinite()) return std::nullopt;
    return fit_rigid_transform(c.world_points, points_cam);
}

}  // namespace

std::optional<PoseEstimate> solve_epnp(const CorrespondenceSet& c, const CameraIntrinsics& k) {
    const size_t n = c.size();
    if (n < 4 || c.world_points.size() != n)
        throw std::runtime_error("insufficient correspondences (need >= 4)");

    // principal axes of the world cloud
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : c.world_points) centroid += p;
    centroid /= static_cast<double>(n);
    Mat3 cov = Mat3::Zero();
    for (const auto& p : c.world_points) cov += (p - centroid) * (p - centroid).transpose();
    cov /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);  // ascending eigenvalues
    const Vec3 evals = eig.eigenvalues().cwiseMax(0.0);
    if (evals[2] <= 0.0 || evals[1] < 1e-12 * evals[2]) return std::nullopt;  // collinear

    EpnpWorkspace ws;
    const bool planar = evals[0] < 1e-8 * evals[2];
    if (planar) {
        ws.n_control = 3;
        const Vec3 e1 = eig.eigenvectors().col(2) * std::sqrt(evals[2]);
        const Vec3 e2 = eig.eigenvectors().col(1) * std::sqrt(evals[1]);
        ws.control_world = {centroid, centroid + e1, centroid + e2};
    } else {
        ws.n_control = 4;
        const Vec3 e1 = eig.eigenvectors().col(2) * std::sqrt(evals[2]);
        const Vec3 e2 = eig.eigenvectors().col(1) * std::sqrt(evals[1]);
        const Vec3 e3 = eig.eigenvectors().col(0) * std::sqrt(evals[0]);
        ws.control_world = {centroid, centroid + e1, centroid + e2, centroid + e3};
    }

    // barycentric coordinates of every world point
    ws.alphas.resize(static_cast<int>(n), ws.n_control);
    if (planar) {
        const Vec3 a1 = ws.control_world[1] - centroid;
        const Vec3 a2 = ws.control_world[2] - centroid;
        for (size_t i = 0; i < n; ++i) {
            const Vec3 d = c.world_points[i] - centroid;
            const double b1 = d.dot(a1) / a1.squaredNorm();
            const double b2 = d.dot(a2) / a2.squaredNorm();
            ws.alphas(static_cast<int>(i), 0) = 1.0 - b1 - b2;
            ws.alphas(static_cast<int>(i), 1) = b1;
            ws.alphas(static_cast<int>(i), 2) = b2;
        }
    } else {
        Eigen::Matrix4d cmat;
        for (int j = 0; j < 4; ++j) {
            cmat.block<3, 1>(0, j) = ws.control_world[j];
            cmat(3, j) = 1.0;
        }
        const Eigen::Matrix4d cinv = cmat.inverse();
        for (size_t i = 0; i < n; ++i) {
            Eigen::Vector4d rhs;
            rhs << c.world_points[i], 1.0;
            ws.alphas.row(static_cast<int>(i)) = (cinv * rhs).transpose();
        }
    }

    // M^T M from the projection constraints in normalized image coordinates
    const int dim = 3 * ws.n_control;
    MatX mtm = MatX::Zero(dim, dim);
    {
        VecX row_u = VecX::Zero(dim), row_v = VecX::Zero(dim);
        for (size_t i = 0; i < n; ++i) {
            const Vec2 nc = k.normalize(c.image_points[i]);
            row_u.setZero();
            row_v.setZero();
            for (int j = 0; j < ws.n_control; ++j) {
                const double a = ws.alphas(static_cast<int>(i), j);
                row_u[3 * j] = a;
                row_u[3 * j + 2] = -a * nc.x();
                row_v[3 * j + 1] = a;
                row_v[3 * j + 2] = -a * nc.y();
            }
            mtm.noalias() += row_u * row_u.transpose();
            mtm.noalias() += row_v * row_v.transpose();
        }
    }
    Eigen::SelfAdjointEigenSolver<MatX> meig(mtm);
    if (meig.info() != Eigen::Success) return std::nullopt;

    const int max_null = planar ? 2 : 4;
    for (int kidx = 0; kidx < max_null; ++kidx)
        ws.null_vectors.push_back(meig.eigenvectors().col(kidx));

    for (int i = 0; i < ws.n_control; ++i)
        for (int j = i + 1; j < ws.n_control; ++j) {
            ws.pairs.emplace_back(i, j);
        }
    ws.rho.resize(static_cast<int>(ws.pairs.size()));
    for (size_t p = 0; p < ws.pairs.size(); ++p)
        ws.rho[static_cast<int>(p)] =
            (ws.control_world[ws.pairs[p].first] - ws.control_world[ws.pairs[p].second])
                .squaredNorm();

    // beta candidates per case, then Gauss-Newton on the distance constraints
    std::vector<VecX> candidates;
    {
        // N = 1: direct scale on the first null vector
        double num = 0.0, den = 0.0;
        for (size_t p = 0; p < ws.pairs.size(); ++p) {
            const auto& [i, j] = ws.pairs[p];
            const Vec3 dv =
                ws.null_vectors[0].segment<3>(3 * i) - ws.null_vectors[0].segment<3>(3 * j);
            num += dv.norm() * std::sqrt(ws.rho[static_cast<int>(p)]);
            den += dv.squaredNorm();
        }
        VecX b(1);
        b[0] = den > 0 ? num / den : 0.0;
        candidates.push_back(b);
    }
    {
        // N = 2: monomials [b11, b12, b22]
        const VecX s = solve_beta_monomials(ws, {{0, 0}, {0, 1}, {1, 1}});
        VecX b(2);
        if (s[0] < 0) {
            b[0] = std::sqrt(-s[0]);
            b[1] = s[2] < 0 ? std::sqrt(-s[2]) : 0.0;
        } else {
            b[0] = std::sqrt(s[0]);
            b[1] = s[2] > 0 ? std::sqrt(s[2]) : 0.0;
        }
        if (s[1] < 0) b[0] = -b[0];
        candidates.push_back(b);
    }
    if (!planar) {
        {
            // N = 3: monomials [b11, b12, b22, b13, b23]
            const VecX s = solve_beta_monomials(ws, {{0, 0}, {0, 1}, {1, 1}, {0, 2}, {1, 2}});
            VecX b(3);
            if (s[0] < 0) {
                b[0] = std::sqrt(-s[0]);
                b[1] = s[2] < 0 ? std::sqrt(-s[2]) : 0.0;
            } else {
                b[0] = std::sqrt(s[0]);
                b[1] = s[2] > 0 ? std::sqrt(s[2]) : 0.0;
            }
            if (s[1] < 0) b[0] = -b[0];
            b[2] = b[0] != 0.0 ? s[3] / b[0] : 0.0;
            candidates.push_back(b);
        }
        {
            // N = 4: monomials [b11, b12, b13, b14]
            const VecX s = solve_beta_monomials(ws, {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
            VecX b(4);
            if (s[0] < 0) {
                b[0] = std::sqrt(-s[0]);
                b[1] = -s[1] / b[0];
                b[2] = -s[2] / b[0];
                b[3] = -s[3] / b[0];
            } else {
                b[0] = std::sqrt(s[0]);
                b[1] = s[1] / b[0];
                b[2] = s[2] / b[0];
                b[3] = s[3] / b[0];
            }
            candidates.push_back(b);
        }
    }

    std::optional<PoseEstimate> best;
    for (VecX betas : candidates) {
        if (!betas.allFinite()) continue;
        gauss_newton_refine(ws, betas, 10);
        if (!betas.allFinite()) continue;
        const auto pose = pose_from_betas(ws, c, betas);
        if (!pose) continue;
        const double err = reprojection_error(*pose, c, k);
        if (!std::isfinite(err)) continue;
        if (!best || err < best->reproj_error) {
            PoseEstimate est;
            est.pose = *pose;
            est.camera_position = camera_position(pose->R, pose->t);
            est.reproj_error = err;
            est.n_correspondences = static_cast<int>(n);
            best = est;
        }
    }
    if (best && best->reproj_error >= 1e5) return std::nullopt;  // behind-camera solution
    return best;
}

}  // namespace pvloc
