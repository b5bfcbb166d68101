#pragma once

// Small-shape cases covering every differentiable operator.

#include "m2t/ops.hpp"

#include <functional>
#include <string>
#include <vector>

namespace m2t::testing {

template <typename T>
struct OpCase {
    std::string name;
    std::vector<Shape> inputs;
    std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)> fn;
};

template <typename T>
std::vector<OpCase<T>> op_cases()
{
    using V = std::vector<BasicTensor<T>>;
    const Shape s5{1, 2, 3, 4, 3};
    return {
        {"add", {{2, 3}, {2, 3}}, [](const V& v) { return add(v[0], v[1]); }},
        {"sub", {{2, 3}, {2, 3}}, [](const V& v) { return sub(v[0], v[1]); }},
        {"mul", {{2, 3}, {2, 3}}, [](const V& v) { return mul(v[0], v[1]); }},
        {"scale", {{5}}, [](const V& v) { return scale(v[0], T(-1.7)); }},
        {"add_broadcast", {{2, 3, 4}, {3, 4}}, [](const V& v) { return add_broadcast(v[0], v[1]); }},
        {"relu", {{3, 5}}, [](const V& v) { return relu(v[0]); }},
        {"leaky_relu", {{3, 5}}, [](const V& v) { return leaky_relu(v[0], T(0.2)); }},
        {"tanh", {{3, 5}}, [](const V& v) { return tanh(v[0]); }},
        {"mean", {{3, 5}}, [](const V& v) { return mean(v[0]); }},
        {"l1_mean", {{3, 5}, {3, 5}}, [](const V& v) { return l1_mean(v[0], v[1]); }},
        {"bce_real", {{2, 7}}, [](const V& v) { return bce_with_logits_mean(v[0], T(1)); }},
        {"bce_fake", {{2, 7}}, [](const V& v) { return bce_with_logits_mean(v[0], T(0)); }},
        {"matmul", {{2, 3, 4}, {2, 4, 5}}, [](const V& v) { return matmul(v[0], v[1]); }},
        {"matmul_tb", {{2, 3, 4}, {2, 5, 4}}, [](const V& v) { return matmul(v[0], v[1], false, true); }},
        {"matmul_ta", {{2, 4, 3}, {2, 4, 5}}, [](const V& v) { return matmul(v[0], v[1], true, false); }},
        {"matmul_shared", {{2, 3, 4}, {4, 5}}, [](const V& v) { return matmul(v[0], v[1]); }},
        {"linear", {{2, 3, 4}, {5, 4}, {5}}, [](const V& v) { return linear(v[0], v[1], v[2]); }},
        {"conv3d", {{1, 2, 5, 4, 5}, {3, 2, 3, 3, 3}, {3}},
         [](const V& v) { return conv3d(v[0], v[1], v[2], Conv3dOptions::same(3)); }},
        {"conv3d_dilated", {{1, 1, 5, 5, 5}, {2, 1, 3, 3, 3}, {2}},
         [](const V& v) { return conv3d(v[0], v[1], v[2], Conv3dOptions::same(3, 2)); }},
        {"conv3d_stride2", {{2, 2, 5, 6, 4}, {2, 2, 3, 3, 3}, {2}},
         [](const V& v) {
             return conv3d(v[0], v[1], v[2], Conv3dOptions{{2, 2, 2}, {1, 1, 1}, {1, 1, 1}});
         }},
        {"conv3d_pointwise", {{1, 4, 2, 3, 2}, {3, 4, 1, 1, 1}, {3}},
         [](const V& v) { return conv3d(v[0], v[1], v[2], Conv3dOptions{}); }},
        {"instance_norm", {s5, {2}, {2}}, [](const V& v) { return instance_norm(v[0], v[1], v[2]); }},
        {"layer_norm", {{3, 6}, {6}, {6}}, [](const V& v) { return layer_norm(v[0], v[1], v[2]); }},
        {"softmax", {{3, 6}}, [](const V& v) { return softmax_lastdim(v[0]); }},
        {"concat", {{1, 2, 2, 2, 2}, {1, 3, 2, 2, 2}}, [](const V& v) { return concat<T>({v[0], v[1]}, 1); }},
        {"crop3d", {s5}, [](const V& v) { return crop3d(v[0], {1, 1, 0}, {2, 2, 3}); }},
        {"pad3d", {s5}, [](const V& v) { return pad3d(v[0], {1, 0, 2}, {0, 1, 1}); }},
        {"reflect_pad", {s5}, [](const V& v) { return reflect_pad_to_even(v[0]); }},
        {"permute", {{2, 3, 4}}, [](const V& v) { return permute(v[0], {2, 0, 1}); }},
        {"upsample", {{1, 2, 2, 3, 2}}, [](const V& v) { return trilinear_upsample(v[0], 2); }},
        {"haar3d", {{1, 2, 2, 4, 2}}, [](const V& v) { return haar3d(v[0]); }},
        {"haar3d_inverse", {{1, 8, 1, 2, 1}}, [](const V& v) { return haar3d_inverse(v[0]); }},
    };
}

} // namespace m2t::testing
