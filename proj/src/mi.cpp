#include "dribo/mi.hpp"

#include <algorithm>
#include <cmath>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;
using ng::Tensor;

BilinearCritic::BilinearCritic(std::size_t dim, Rng& rng, double init_noise) : dim_(dim) {
    if (dim == 0) throw ContractError("BilinearCritic: dim must be positive");
    Tensor w = standard_normal({dim, dim}, rng);
    for (auto& v : w.storage()) v *= init_noise;
    for (std::size_t i = 0; i < dim; ++i) w.at(i, i) += 1.0;
    w_ = params_.add("w", std::move(w));
}

BilinearCritic::BilinearCritic(ParamRegistry params) : params_(std::move(params)) {
    w_ = params_.get("w");
    const auto& s = w_.shape();
    if (s.size() != 2 || s[0] != s[1] || params_.entries().size() != 1)
        throw IoError("BilinearCritic: expected a single square parameter 'w'");
    dim_ = s[0];
}

Node score_matrix(const Node& s1, const Node& s2, const Node& w) {
    const auto& a = s1.shape();
    const auto& b = s2.shape();
    if (a.size() != 2 || b.size() != 2 || a != b)
        throw ShapeError("score_matrix: views must share shape (M, D), got " + ng::shape_str(a) + " and " +
                         ng::shape_str(b));
    if (w.shape() != ng::Shape{a[1], a[1]})
        throw ShapeError("score_matrix: critic is " + ng::shape_str(w.shape()) + " for D=" + std::to_string(a[1]));
    return ng::matmul(ng::matmul(s1, w), ng::transpose(s2));
}

Node score_matrix(const Node& s1, const Node& s2, const BilinearCritic& critic) {
    return score_matrix(s1, s2, critic.weight());
}

Node infonce(const Node& scores) {
    const auto& s = scores.shape();
    if (s.size() != 2 || s[0] != s[1]) throw ShapeError("infonce: scores must be square, got " + ng::shape_str(s));
    const std::size_t m = s[0];
    if (m < 2) throw ContractError("infonce: need at least two pairs");
    // Shift each row by its (constant) maximum so that constant rows produce exactly
    // zero and saturated rows stay finite. The shift cancels in the gradient.
    Tensor row_max({m, m});
    Tensor eye({m, m}, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = scores.value().at(i, 0);
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, scores.value().at(i, j));
        for (std::size_t j = 0; j < m; ++j) row_max.at(i, j) = mx;
        eye.at(i, i) = 1.0;
    }
    const Node shifted = ng::sub(scores, Node::constant(std::move(row_max)));
    const Node positives = ng::sum(ng::mul(shifted, Node::constant(std::move(eye))), 1);
    const Node per_row = ng::add_scalar(ng::sub(positives, ng::logsumexp_rows(shifted)),
                                        std::log(static_cast<double>(m)));
    return ng::mean(per_row);
}

}  // namespace dribo
