#pragma once

#include <vector>

#include "finr/ops.hpp"

namespace finr {

// Multiresolution hash-grid encoder over normalized (x,y,t) in [0,1]^3.
// Level l has resolution floor(base_resolution * per_level_scale^l) cells per
// axis; a level whose vertex count (N_l+1)^3 fits in the table is indexed
// directly (collision-free), otherwise vertices are hashed by XOR of the
// coordinate indices multiplied by (1, 2654435761, 805459861) modulo 2^T.
struct HashEncoderConfig {
    int levels = 8;
    int features_per_level = 2;
    int log2_table_size = 16;
    int base_resolution = 8;
    double per_level_scale = 1.5;

    // Desk-scale default used by the acceptance experiments.
    static HashEncoderConfig desk() { return {8, 2, 16, 8, 1.5}; }
    // Full-size profile (L=24, F=2, T=24, N_min=16, b=2.0).
    static HashEncoderConfig paper() { return {24, 2, 24, 16, 2.0}; }

    int64_t table_size() const { return int64_t{1} << log2_table_size; }
    int64_t out_width() const { return int64_t{levels} * features_per_level; }
    int64_t level_resolution(int level) const;
    bool level_is_direct(int level) const;
    void validate() const;
};

// coords [B,3] in [0,1]^3, one feature table [2^T, F] per level.
// Returns [B, L*F] with levels concatenated in ascending order; trilinear
// interpolation of the 8 enclosing cell corners per level. Differentiable
// w.r.t. the tables, with a coordinate tangent rule for directional
// derivatives.
Tensor hash_encode(const Tensor& coords, const std::vector<Tensor>& tables, const HashEncoderConfig& cfg);

}  // namespace finr
