#pragma once

#include <array>

#include "redirtrans/graph.hpp"

namespace rdt::geom {

// A condition is one attribute's orientation: pitch (theta) and yaw (phi),
// in radians, both within (-pi/2, pi/2).
struct Condition {
    float pitch = 0.0f;
    float yaw = 0.0f;
};

using Mat3 = std::array<std::array<float, 3>, 3>;
using Vec3 = std::array<float, 3>;

// R(c) = R_yaw(phi) * R_pitch(theta):
//
//   R_yaw =  [ cos phi, 0, sin phi ]     R_pitch = [ 1,    0    ,     0    ]
//            [    0   , 1,    0    ]               [ 0, cos theta, -sin theta ]
//            [-sin phi, 0, cos phi ]               [ 0, sin theta,  cos theta ]
//
// Orthonormal by construction; the inverse is the transpose.
Mat3 rotation_from_condition(const Condition& c);
Mat3 transpose(const Mat3& m);
Mat3 matmul(const Mat3& a, const Mat3& b);

// Unit gaze/head vector: (cos theta sin phi, sin theta, cos theta cos phi).
Vec3 condition_to_vector(const Condition& c);

// Angle in radians between two nonzero vectors: arccos of their cosine
// similarity (clamped to [-1,1], so identical directions give exactly 0).
// Throws std::invalid_argument if either norm is <= 1e-8.
double angular_distance(const Vec3& u, const Vec3& v);

// Angle between the unit vectors of two conditions.
double condition_angular_error(const Condition& a, const Condition& b);

// ---- graph builders --------------------------------------------------------
// These assemble the same quantities as differentiable subgraphs. cond is a
// node of shape [2] = (pitch, yaw).

struct RotationNodes {
    int R;   // [3,3]
    int Rt;  // its transpose, built from the same sin/cos nodes
};
RotationNodes rotation_nodes(Graph& g, int cond);

// [3] unit vector node from a [2] condition node.
int condition_vector_node(Graph& g, int cond);

// arccos cosine-similarity between two same-length vector nodes. The norm
// product is floored at 1e-8 so degenerate inputs yield pi/2 with a zero
// gradient instead of dividing by zero.
int angular_distance_node(Graph& g, int u, int v);

// angular_distance_node over the unit vectors of two [2] condition nodes.
int condition_error_node(Graph& g, int cond_a, int cond_b);

}  // namespace rdt::geom
