#include <cmath>
#include <random>

#include "doctest.h"
#include "dribo/loss.hpp"

using namespace dribo;
using namespace dribo::ndgrad;

namespace {

EncoderConfig micro() {
    EncoderConfig c;
    c.obs_dim = 6;
    c.embed_hidden = 5;
    c.embed_dim = 4;
    c.deter_dim = 4;
    c.stoch_dim = 3;
    c.head_hidden = 4;
    c.action_dim = 2;
    return c;
}

Tensor uniform(const Shape& shape, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

SequenceBatch random_batch(std::size_t n, std::size_t t, Rng& rng) {
    SequenceBatch b;
    b.height = 2;
    b.width = 3;
    for (std::size_t k = 0; k < t; ++k) {
        b.observations.push_back(uniform({n, 6}, 0, 1, rng));
        b.actions.push_back(uniform({n, 2}, -1, 1, rng));
    }
    b.rewards = uniform({t, n}, -1, 1, rng);
    return b;
}

// Same actions and rewards, freshly drawn pixels.
SequenceBatch other_view(const SequenceBatch& b, Rng& rng) {
    SequenceBatch v = b;
    for (auto& o : v.observations) o = uniform(o.shape(), 0, 1, rng);
    return v;
}

DiagGaussian gaussian(const Shape& shape, Rng& rng) {
    return {Node::variable(uniform(shape, -1, 1, rng)), Node::variable(uniform(shape, 0.3, 2.0, rng))};
}

void jitter(ParamRegistry& reg, Rng& rng) {
    std::normal_distribution<double> n(0.0, 0.3);
    for (const auto& e : reg.entries()) {
        Node p = e.node;
        for (auto& v : p.mutable_value().storage()) v += n(rng);
    }
}

}  // namespace

TEST_CASE("beta schedule endpoints and midpoint") {
    const BetaSchedule s;
    CHECK(beta_at(s, 0) == 1e-4);
    CHECK(beta_at(s, 10) == 1e-4);
    CHECK(beta_at(s, 60) == 1e-3);
    CHECK(beta_at(s, 1000) == 1e-3);
    CHECK(std::abs(beta_at(s, 35) - 0.00031622776601683794) < 1e-15);
    double prev = 0.0;
    for (long e = 0; e <= 80; ++e) {
        const double b = beta_at(s, e);
        CHECK(b >= prev);
        prev = b;
    }
    CHECK_THROWS_AS(beta_at(s, -1), ContractError);
    CHECK_THROWS_AS(beta_at({0.0, 1e-3, 10, 60}, 5), ContractError);
    CHECK_THROWS_AS(beta_at({1e-3, 1e-4, 10, 60}, 5), ContractError);
    CHECK_THROWS_AS(beta_at({1e-4, 1e-3, 60, 10}, 5), ContractError);
}

TEST_CASE("skl_sequence hand cases") {
    Rng rng(1);
    const auto p = gaussian({3, 2}, rng);
    const auto q = gaussian({3, 2}, rng);
    CHECK(skl_sequence({p, q}, {p, q}).item() == 0.0);
    CHECK(skl_sequence({p}, {q}).item() == mean(skl(p, q)).item());
    // Unit-variance means 0 vs 1 give SKL 0.5; 0 vs sqrt(3) give 1.5.
    const Node one = Node::constant(Tensor({1, 1}, 1.0));
    const DiagGaussian a{Node::constant(Tensor({1, 1}, 0.0)), one};
    const DiagGaussian b{Node::constant(Tensor({1, 1}, 1.0)), one};
    const DiagGaussian c{Node::constant(Tensor({1, 1}, std::sqrt(3.0))), one};
    CHECK(skl(a, b).item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(skl(a, c).item() == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(skl_sequence({a, a}, {b, c}).item() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(skl_sequence({a}, {a, b}), ContractError);
    CHECK_THROWS_AS(skl_sequence({}, {}), ContractError);
}

TEST_CASE("balanced KL keeps the plain value and splits the gradient 0.8 to 0.2") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto post = gaussian({4, 3}, rng);
        const auto prior = gaussian({4, 3}, rng);
        const Node bal = kl_balanced(post, prior);
        const Node plain = kl(post, prior);
        CHECK(bal.value().storage() == plain.value().storage());

        backward(sum(plain));
        const Tensor g_prior_mean = prior.mean.grad(), g_prior_std = prior.stddev.grad();
        const Tensor g_post_mean = post.mean.grad(), g_post_std = post.stddev.grad();
        for (const Node* n : {&post.mean, &post.stddev, &prior.mean, &prior.stddev}) Node(*n).zero_grad();
        backward(sum(bal));
        for (std::size_t k = 0; k < g_prior_mean.size(); ++k) {
            CHECK(std::abs(prior.mean.grad()[k] - 0.8 * g_prior_mean[k]) <= 1e-6 * std::abs(g_prior_mean[k]) + 1e-15);
            CHECK(std::abs(prior.stddev.grad()[k] - 0.8 * g_prior_std[k]) <= 1e-6 * std::abs(g_prior_std[k]) + 1e-15);
            CHECK(std::abs(post.mean.grad()[k] - 0.2 * g_post_mean[k]) <= 1e-6 * std::abs(g_post_mean[k]) + 1e-15);
            CHECK(std::abs(post.stddev.grad()[k] - 0.2 * g_post_std[k]) <= 1e-6 * std::abs(g_post_std[k]) + 1e-15);
        }
    }
}

TEST_CASE("balanced KL ratio measured by finite differences") {
    Rng rng(3);
    const auto post = gaussian({1, 3}, rng);
    const auto prior = gaussian({1, 3}, rng);
    const Tensor m0 = prior.mean.value();
    // Finite differences of the forward value cannot see the split, so compare backprop against them.
    const double eps = 1e-6;
    for (std::size_t k = 0; k < 3; ++k) {
        Tensor up = m0, dn = m0;
        up[k] += eps;
        dn[k] -= eps;
        const double fd = (kl(post, {Node::constant(up), prior.stddev}).item() -
                           kl(post, {Node::constant(dn), prior.stddev}).item()) / (2 * eps);
        Node(prior.mean).zero_grad();
        backward(sum(kl_balanced(post, prior)));
        CHECK(prior.mean.grad()[k] / fd == doctest::Approx(0.8).epsilon(1e-6));
    }
}

TEST_CASE("balanced KL of identical distributions is zero with zero gradients") {
    Rng rng(4);
    const auto p = gaussian({2, 3}, rng);
    const Node v = kl_balanced(p, p);
    for (double x : v.value().storage()) CHECK(x == 0.0);
    backward(sum(v));
    const Tensor gm = p.mean.grad(), gs = p.stddev.grad();
    for (double g : gm.storage()) CHECK(std::abs(g) < 1e-15);
    for (double g : gs.storage()) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("loss with beta zero is the negative contrastive estimate") {
    Rng rng(5);
    RssmEncoder model(micro(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(2, 3, rng);
    const auto v2 = other_view(v1, rng);
    Rng nrng(6);
    const auto out = dribo_loss(v1, v2, model, critic, 0.0, gaussian_noise(nrng));
    CHECK(out.total.item() == -out.infonce_value);
    CHECK(out.pairs == 6);
    CHECK(out.skl_value > 0.0);
}

TEST_CASE("identical views with shared noise have zero SKL") {
    Rng rng(7);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v = random_batch(3, 3, rng);
    for (bool block : {false, true}) {
        Rng nrng(8);
        const auto out = dribo_loss(v, v, model, critic, 1e-3, gaussian_noise(nrng), {block, true});
        CHECK(out.skl_value == 0.0);
        CHECK(out.total.item() == -out.infonce_value + 1e-3 * (0.0 + out.kl_balance_value));
    }
    const auto zero = dribo_loss(v, v, model, critic, 1e-3, zero_noise());
    CHECK(zero.skl_value == 0.0);
    // Independent noise makes the sampled states, and therefore later posteriors, differ.
    Rng nrng(9);
    CHECK(dribo_loss(v, v, model, critic, 1e-3, gaussian_noise(nrng)).skl_value > 0.0);
}

TEST_CASE("total recomposes from the component operations") {
    Rng rng(10);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(1, 2, rng);
    const auto v2 = other_view(v1, rng);
    const double beta = 0.37;

    Rng n1(11);
    const auto out = dribo_loss(v1, v2, model, critic, beta, gaussian_noise(n1));

    Rng n2(11);
    const NoiseFn noise = gaussian_noise(n2);
    const auto e1 = model.encode_sequence(v1.observations, v1.actions, std::nullopt, noise);
    const auto e2 = model.encode_sequence(v2.observations, v2.actions, std::nullopt, noise);
    const Node s1 = concat({e1[0].state.representation(), e1[1].state.representation()}, 0);
    const Node s2 = concat({e2[0].state.representation(), e2[1].state.representation()}, 0);
    const double nce = infonce(score_matrix(s1, s2, critic)).item();
    const double skl_term = skl_sequence({e1[0].posterior, e1[1].posterior}, {e2[0].posterior, e2[1].posterior}).item();
    double bal = 0.0;
    for (const auto* e : {&e1, &e2})
        for (const auto& s : *e) bal += kl_balanced(s.posterior, s.prior).item() / 4.0;

    CHECK(out.infonce_value == nce);
    CHECK(out.skl_value == skl_term);
    CHECK(out.kl_balance_value == doctest::Approx(bal).epsilon(1e-14));
    CHECK(out.total.item() == doctest::Approx(-nce + beta * (skl_term + bal)).epsilon(1e-14));
}

TEST_CASE("swapping the views keeps the SKL term") {
    Rng rng(12);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(3, 3, rng);
    const auto v2 = other_view(v1, rng);
    // Zero noise keeps each view's states independent of encoding order.
    const auto a = dribo_loss(v1, v2, model, critic, 1e-3, zero_noise());
    const auto b = dribo_loss(v2, v1, model, critic, 1e-3, zero_noise());
    CHECK(a.skl_value == b.skl_value);
    CHECK(a.kl_balance_value == b.kl_balance_value);

    // With the critic at the identity the score matrix is symmetric up to transposition.
    BilinearCritic identity(model.config().state_dim(), rng, 0.0);
    const auto c = dribo_loss(v1, v2, model, identity, 1e-3, zero_noise());
    const auto d = dribo_loss(v2, v1, model, identity, 1e-3, zero_noise());
    const auto e1 = model.encode_sequence(v1.observations, v1.actions, std::nullopt, zero_noise());
    const auto e2 = model.encode_sequence(v2.observations, v2.actions, std::nullopt, zero_noise());
    std::vector<Node> r1, r2;
    for (std::size_t t = 0; t < 3; ++t) {
        r1.push_back(e1[t].state.representation());
        r2.push_back(e2[t].state.representation());
    }
    const Node scores = score_matrix(concat(r1, 0), concat(r2, 0), identity);
    CHECK(c.infonce_value == infonce(scores).item());
    CHECK(d.infonce_value == doctest::Approx(infonce(transpose(scores)).item()).epsilon(1e-14));
}

TEST_CASE("view and configuration checks") {
    Rng rng(13);
    RssmEncoder model(micro(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(2, 3, rng);
    auto v2 = other_view(v1, rng);
    v2.actions[1].storage()[0] += 1e-9;
    CHECK_THROWS_AS(dribo_loss(v1, v2, model, critic, 1e-3, zero_noise()), ContractError);
    CHECK_THROWS_AS(dribo_loss(v1, random_batch(2, 2, rng), model, critic, 1e-3, zero_noise()), ContractError);
    CHECK_THROWS_AS(dribo_loss(v1, random_batch(3, 3, rng), model, critic, 1e-3, zero_noise()), ContractError);
    CHECK_THROWS_AS(dribo_loss(v1, v1, model, critic, -1.0, zero_noise()), ContractError);
    auto wrong = v1;
    wrong.height = 3;
    wrong.width = 3;
    for (auto& o : wrong.observations) o = Tensor({2, 9}, 0.5);
    CHECK_THROWS_AS(dribo_loss(wrong, wrong, model, critic, 1e-3, zero_noise()), ContractError);
    CHECK_THROWS_AS(dribo_loss(random_batch(1, 1, rng), random_batch(1, 1, rng), model, critic, 1e-3, zero_noise()),
                    ContractError);
}

TEST_CASE("metric keys are stable") {
    Rng rng(14);
    RssmEncoder model(micro(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(2, 2, rng);
    const auto out = dribo_loss(v1, other_view(v1, rng), model, critic, 2e-4, zero_noise());
    const auto m = out.metrics();
    const auto keys = dribo_metric_keys();
    REQUIRE(m.size() == keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) CHECK(m[i].first == keys[i]);
    CHECK(m[0].second == out.total.item());
    CHECK(m[2].second == doctest::Approx(out.infonce_value - std::log(4.0)).epsilon(1e-15));
    CHECK(m[5].second == 2e-4);
}

TEST_CASE("loss gradients match finite differences over every parameter") {
    Rng rng(15);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng, 0.3);
    const auto v1 = random_batch(2, 3, rng);
    const auto v2 = other_view(v1, rng);
    // The balanced regularizer has no forward function whose derivative it is, so the
    // composite is checked with plain KL; the balanced split is checked exactly above.
    const auto loss = [&] {
        Rng n(16);
        return dribo_loss(v1, v2, model, critic, 0.5, gaussian_noise(n), {false, false, true}).total;
    };
    CHECK(registry_grad_check(model.params(), loss, 1e-5) < 1e-4);
    CHECK(registry_grad_check(critic.params(), loss, 1e-5) < 1e-4);
    // With beta = 0 the regularizer drops out, so the default options are checkable as is.
    const auto infomax = [&] {
        Rng n(16);
        return dribo_loss(v1, v2, model, critic, 0.0, gaussian_noise(n)).total;
    };
    CHECK(registry_grad_check(model.params(), infomax, 1e-5) < 1e-4);
}

TEST_CASE("blocking the conditioning gradient only changes the history path") {
    Rng rng(21);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto grads = [&](const SequenceBatch& a, const SequenceBatch& b, bool block) {
        model.params().zero_grads();
        Rng n(22);
        backward(dribo_loss(a, b, model, critic, 0.5, gaussian_noise(n), {block, false, true}).skl);
        std::vector<Tensor> out;
        for (const auto& p : model.params().nodes()) out.push_back(p.grad());
        return out;
    };
    // One step has no history, so both settings give the same gradient.
    const auto s1 = random_batch(2, 1, rng);
    const auto s2 = other_view(s1, rng);
    const auto open1 = grads(s1, s2, false), blocked1 = grads(s1, s2, true);
    for (std::size_t k = 0; k < open1.size(); ++k)
        for (std::size_t i = 0; i < open1[k].size(); ++i)
            CHECK(std::abs(open1[k][i] - blocked1[k][i]) <= 1e-12 * (1.0 + std::abs(open1[k][i])));
    // Longer sequences: same value, different gradient.
    const auto l1 = random_batch(2, 3, rng);
    const auto l2 = other_view(l1, rng);
    Rng a(23), b(23);
    CHECK(dribo_loss(l1, l2, model, critic, 0.5, gaussian_noise(a)).skl_value ==
          doctest::Approx(dribo_loss(l1, l2, model, critic, 0.5, gaussian_noise(b), {true, false}).skl_value)
              .epsilon(1e-14));
    const auto open3 = grads(l1, l2, false), blocked3 = grads(l1, l2, true);
    double diff = 0.0;
    for (std::size_t k = 0; k < open3.size(); ++k)
        for (std::size_t i = 0; i < open3[k].size(); ++i) diff += std::abs(open3[k][i] - blocked3[k][i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("plain and balanced regularizers agree in value") {
    Rng rng(19);
    RssmEncoder model(micro(), rng);
    jitter(model.params(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(2, 3, rng);
    const auto v2 = other_view(v1, rng);
    Rng a(20), b(20);
    const auto bal = dribo_loss(v1, v2, model, critic, 0.3, gaussian_noise(a));
    const auto plain = dribo_loss(v1, v2, model, critic, 0.3, gaussian_noise(b), {false, false, true});
    CHECK(bal.total.item() == plain.total.item());
    CHECK(bal.kl_balance_value == plain.kl_balance_value);
}

TEST_CASE("training on a fixed micro-dataset lowers the SKL term") {
    Rng rng(17);
    RssmEncoder model(micro(), rng);
    BilinearCritic critic(model.config().state_dim(), rng);
    const auto v1 = random_batch(4, 3, rng);
    const auto v2 = other_view(v1, rng);
    std::vector<Node> params = model.params().nodes();
    for (const auto& p : critic.params().nodes()) params.push_back(p);
    Adam opt(params, {.lr = 3e-3});
    const double beta = 1.0;
    double initial = 0.0, final = 0.0;
    for (int step = 0; step < 200; ++step) {
        Rng n(18);
        opt.zero_grads();
        const auto out = dribo_loss(v1, v2, model, critic, beta, gaussian_noise(n));
        if (step == 0) initial = out.skl_value;
        final = out.skl_value;
        backward(out.total);
        opt.step();
    }
    MESSAGE("skl " << initial << " -> " << final);
    CHECK(final < initial);
}
