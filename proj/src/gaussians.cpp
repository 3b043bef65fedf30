#include "dribo/gaussians.hpp"

#include <cmath>
#include <numbers>

namespace dribo {

namespace ng = ndgrad;
using ng::Node;

namespace {

void check_same(const DiagGaussian& p, const DiagGaussian& q, const char* op) {
    if (p.mean.shape() != q.mean.shape() || p.stddev.shape() != q.stddev.shape() || p.mean.shape() != p.stddev.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + ng::shape_str(p.mean.shape()) + " vs " +
                         ng::shape_str(q.mean.shape()));
}

Node reduce_last(const Node& x) { return ng::sum(x, x.shape().size() - 1); }

}  // namespace

DiagGaussian DiagGaussian::from_raw(const Node& mean, const Node& raw_stddev, double floor) {
    if (mean.shape() != raw_stddev.shape()) throw ShapeError("DiagGaussian: mean/stddev shape mismatch");
    return {mean, ng::add_scalar(ng::softplus(raw_stddev), floor)};
}

DiagGaussian DiagGaussian::detached() const { return {ng::stop_gradient(mean), ng::stop_gradient(stddev)}; }

Node kl(const DiagGaussian& p, const DiagGaussian& q) {
    check_same(p, q, "kl");
    // log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
    const Node log_ratio = ng::sub(ng::log(q.stddev), ng::log(p.stddev));
    const Node num = ng::add(ng::square(p.stddev), ng::square(ng::sub(p.mean, q.mean)));
    const Node den = ng::scale(ng::square(q.stddev), 2.0);
    const Node per_dim = ng::add_scalar(ng::add(log_ratio, ng::div(num, den)), -0.5);
    return reduce_last(per_dim);
}

Node skl(const DiagGaussian& p, const DiagGaussian& q) { return ng::scale(ng::add(kl(p, q), kl(q, p)), 0.5); }

Node rsample(const DiagGaussian& d, const ng::Tensor& noise) {
    if (noise.shape() != d.mean.shape())
        throw ShapeError("rsample: noise shape " + ng::shape_str(noise.shape()) + " vs " + ng::shape_str(d.mean.shape()));
    return ng::add(d.mean, ng::mul(d.stddev, Node::constant(noise)));
}

Node log_prob(const DiagGaussian& d, const Node& x) {
    if (x.shape() != d.mean.shape())
        throw ShapeError("log_prob: shape " + ng::shape_str(x.shape()) + " vs " + ng::shape_str(d.mean.shape()));
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    const Node z = ng::div(ng::sub(x, d.mean), d.stddev);
    const Node per_dim = ng::add_scalar(ng::neg(ng::add(ng::log(d.stddev), ng::scale(ng::square(z), 0.5))), -half_log_2pi);
    return reduce_last(per_dim);
}

}  // namespace dribo
