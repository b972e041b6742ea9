#include "risa/geomfeat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "risa/error.hpp"

namespace risa::geom {

BaseFeature base_feature(const mesh::PartMesh* part, int template_edge_count) {
  if (!part) return BaseFeature::zero(template_edge_count);
  if (part->edge_count() != template_edge_count)
    fail(ErrorCode::ConnectivityMismatch,
         "part has " + std::to_string(part->edge_count()) + " edges, template has " +
             std::to_string(template_edge_count));
  BaseFeature f = BaseFeature::zero(template_edge_count);
  auto lengths = mesh::edge_lengths(*part);
  auto angles = mesh::dihedral_angles(*part);
  for (int e = 0; e < template_edge_count; ++e) {
    f.at(e, 0) = lengths[e];
    f.at(e, 1) = angles[e];
  }
  return f;
}

namespace {

// Jacobi eigendecomposition of a symmetric 3x3 matrix. Returns eigenvalues on
// the diagonal of `a` and eigenvectors as columns of `v`.
void jacobi_eigen(Mat3& a, Mat3& v) {
  v = Mat3::identity();
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
    if (off == 0.0) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        Mat3 r = Mat3::identity();
        r(p, p) = c; r(q, q) = c; r(p, q) = s; r(q, p) = -s;
        a = r.transposed() * a * r;
        a(p, q) = a(q, p) = 0.0;  // clamp annihilated entry
        v = v * r;
      }
    }
  }
}

}  // namespace

PrincipalFrame principal_frame(const mesh::PartMesh& part) {
  const auto& verts = part.vertices;
  const double n = static_cast<double>(verts.size());
  if (verts.size() < 4)
    fail(ErrorCode::DegenerateGeometry, "part has fewer than 4 vertices");

  Vec3 c{0, 0, 0};
  for (const auto& p : verts) c += p;
  c = c * (1.0 / n);

  Mat3 cov;
  for (const auto& p : verts) {
    Vec3 d = p - c;
    double dv[3] = {d.x, d.y, d.z};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) cov(i, j) += dv[i] * dv[j] / n;
  }

  Mat3 a = cov, v;
  jacobi_eigen(a, v);

  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i) > a(j, j); });

  PrincipalFrame frame;
  frame.centroid = c;
  for (int k = 0; k < 3; ++k) {
    int i = order[k];
    frame.eigenvalues[k] = std::max(a(i, i), 0.0);
    frame.axes[k] = normalized({v(0, i), v(1, i), v(2, i)});
  }
  if (frame.eigenvalues[1] <= 1e-12 * std::max(frame.eigenvalues[0], 1e-300))
    fail(ErrorCode::DegenerateGeometry, "vertex covariance has rank < 2");

  // Sign fix: third central moment of projections >= 0; if the moment
  // vanishes, make the largest-magnitude component positive.
  for (int k = 0; k < 3; ++k) {
    double m3 = 0.0;
    for (const auto& p : verts) {
      double t = dot(p - c, frame.axes[k]);
      m3 += t * t * t;
    }
    m3 /= n;
    if (m3 < -1e-12) {
      frame.axes[k] = frame.axes[k] * -1.0;
    } else if (m3 <= 1e-12) {
      const Vec3& ax = frame.axes[k];
      int big = 0;
      for (int i = 1; i < 3; ++i)
        if (std::abs(ax[i]) > std::abs(ax[big])) big = i;
      if (ax[big] < 0.0) frame.axes[k] = frame.axes[k] * -1.0;
    }
  }
  return frame;
}

StructuralFeature structural_feature(const mesh::PartMesh* part,
                                     const mesh::PartMesh& body) {
  StructuralFeature out;
  if (!part) return out;  // sv1 = 0 forces the rest to 0

  PrincipalFrame pf = principal_frame(*part);
  PrincipalFrame bf = principal_frame(body);

  out.sv[0] = 1.0;
  Vec3 offset = pf.centroid - bf.centroid;
  double dist = norm(offset);
  out.sv[1] = dist;
  for (int i = 0; i < 3; ++i) {
    out.sv[2 + i] = std::abs(dot(pf.axes[0], bf.axes[i]));
    out.sv[5 + i] = std::abs(dot(pf.axes[1], bf.axes[i]));
  }
  if (dist >= 1e-9) {
    Vec3 dir = offset * (1.0 / dist);
    for (int i = 0; i < 3; ++i) out.sv[8 + i] = dot(dir, bf.axes[i]);
  }
  return out;
}

int select_body_part(
    const std::vector<std::vector<const mesh::PartMesh*>>& parts) {
  if (parts.empty()) fail(ErrorCode::NoCommonPart, "no shapes given");
  const size_t label_count = parts.front().size();

  int best_label = -1;
  double best_volume = 0.0;
  for (size_t p = 0; p < label_count; ++p) {
    bool common = true;
    double volume_sum = 0.0;
    for (const auto& shape : parts) {
      if (p >= shape.size() || shape[p] == nullptr) {
        common = false;
        break;
      }
      volume_sum += mesh::signed_volume(*shape[p]);
    }
    if (!common) continue;
    double mean_volume = volume_sum / static_cast<double>(parts.size());
    if (best_label < 0 || mean_volume > best_volume) {
      best_label = static_cast<int>(p) + 1;
      best_volume = mean_volume;
    }
  }
  if (best_label < 0)
    fail(ErrorCode::NoCommonPart, "no part label is present in every shape");
  return best_label;
}

}  // namespace risa::geom
