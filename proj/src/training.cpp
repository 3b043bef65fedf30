#include "dribo/training.hpp"

#include <cmath>
#include <fstream>
#include <optional>

#include "dribo/evaluation.hpp"
#include "dribo/views.hpp"

namespace dribo {

namespace ng = ndgrad;
namespace fs = std::filesystem;

namespace {

// Independent generator per purpose so that, for example, evaluation never shifts training draws.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

enum Purpose : std::uint64_t { init = 1, environment, acting, updates, augmentation, encoder_noise, evaluation };

const char* kConfigPrefix = "cfg.";

}  // namespace

Learner::Learner(const RunConfig& config) : config_(config) {
    config_.validate();
    Rng rng = stream(config_.run.seed, Purpose::init);
    encoder_ = std::make_unique<RssmEncoder>(config_.model, rng);
    critic_ = std::make_unique<BilinearCritic>(config_.model.state_dim(), rng, config_.dribo.critic_init_noise);
    if (config_.run.agent == AgentKind::sac) {
        sac_ = std::make_unique<SacAgent>(config_.sac, rng);
        target_encoder_ = std::make_unique<RssmEncoder>(encoder_->clone());
    } else {
        ppo_ = std::make_unique<PpoAgent>(config_.ppo, rng);
    }
}

Checkpoint Learner::to_checkpoint() const {
    Checkpoint c;
    for (const auto& [k, v] : config_to_map(config_)) c.header[kConfigPrefix + k] = v;
    c.add_registry("encoder", encoder_->params());
    c.add_registry("critic", critic_->params());
    if (sac_) {
        c.add_registry("sac/actor", sac_->actor());
        c.add_registry("sac/critic", sac_->critic());
        c.add_registry("sac/critic_target", sac_->critic_target());
        c.add_registry("sac/temperature", sac_->temperature());
        c.add_registry("sac/target_encoder", target_encoder_->params());
    }
    if (ppo_) c.add_registry("ppo/agent", ppo_->params());
    return c;
}

Learner Learner::from_checkpoint(const Checkpoint& ckpt) {
    std::map<std::string, std::string> kv;
    const std::string prefix(kConfigPrefix);
    for (const auto& [k, v] : ckpt.header)
        if (k.rfind(prefix, 0) == 0) kv[k.substr(prefix.size())] = v;
    if (kv.empty()) throw IoError("checkpoint: no run configuration in header");
    RunConfig config;
    try {
        config = config_from_map(kv);
    } catch (const ConfigError& e) {
        throw IoError(std::string("checkpoint: bad run configuration: ") + e.what());
    }
    Learner l(config);
    auto load = [&](const char* name, ParamRegistry& reg) {
        if (!ckpt.has_prefix(name)) throw IoError(std::string("checkpoint: missing ") + name + " parameters");
        ckpt.load_into(name, reg);
    };
    load("encoder", l.encoder_->params());
    load("critic", l.critic_->params());
    if (l.sac_) {
        load("sac/actor", l.sac_->actor());
        load("sac/critic", l.sac_->critic());
        load("sac/critic_target", l.sac_->critic_target());
        load("sac/temperature", l.sac_->temperature());
        load("sac/target_encoder", l.target_encoder_->params());
    }
    if (l.ppo_) load("ppo/agent", l.ppo_->params());
    return l;
}

bool Learner::all_finite() const {
    bool ok = encoder_->params().all_finite() && critic_->params().all_finite();
    if (sac_)
        ok = ok && sac_->actor().all_finite() && sac_->critic().all_finite() && sac_->critic_target().all_finite() &&
             sac_->temperature().all_finite() && target_encoder_->params().all_finite();
    if (ppo_) ok = ok && ppo_->params().all_finite();
    return ok;
}

PlayedEpisode play_episode(const Learner& learner, DistractorControl& env, BackgroundMode mode, ActMode act_mode,
                           Rng& env_rng, Rng& act_rng, bool uniform_random, RewardNormalizer* normalizer) {
    const RunConfig& cfg = learner.config();
    const bool ppo = cfg.run.agent == AgentKind::ppo;
    PlayedEpisode out;
    out.episode.height = out.episode.width = cfg.env.render_size;
    std::vector<double> frame = env.reset(mode, env_rng);
    out.episode.background_id = env.background_id();
    Carry carry = initial_carry(learner.encoder());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    while (!env.done()) {
        const std::vector<double> view = center_crop(frame, cfg.augment);
        std::vector<double> action;
        if (ppo) {
            const PpoAction a = ppo_act(learner.ppo(), learner.encoder(), carry, view, act_mode, act_rng);
            out.rollout.frames.push_back(view);
            out.rollout.actions.push_back(a.index);
            out.rollout.old_log_probs.push_back(a.log_prob);
            out.rollout.values.push_back(a.value);
            out.rollout.prev_states.push_back(a.prev_state);
            out.rollout.prev_actions.push_back(carry.prev_action.storage());
            out.rollout.noise.push_back(a.noise);
            action = a.one_hot;
            carry = a.next;
            out.states.push_back(carry.state.representation().value().storage());
        } else if (uniform_random) {
            action = {u(act_rng)};
        } else {
            SacAction a = sac_act(learner.sac(), learner.encoder(), carry, view, act_mode, act_rng);
            action = std::move(a.action);
            carry = std::move(a.next);
            out.states.push_back(carry.state.representation().value().storage());
        }
        const StepResult step = env.step(action);
        out.episode.observations.push_back(std::move(frame));
        out.episode.actions.push_back(action);
        out.episode.rewards.push_back(step.reward);
        out.total_return += step.reward;
        if (ppo) {
            out.rollout.rewards.push_back(normalizer ? (*normalizer)(step.reward, step.done) : step.reward);
            out.rollout.terminal.push_back(step.done ? 1 : 0);
        }
        frame = step.observation;
    }
    if (ppo) out.episode.old_states = out.states;
    return out;
}

std::vector<std::string> declared_metric_keys(AgentKind agent) {
    std::vector<std::string> keys{"episode/return"};
    for (const auto& k : dribo_metric_keys()) keys.push_back(k);
    for (const auto& k : agent == AgentKind::sac ? sac_metric_keys() : ppo_metric_keys()) keys.push_back(k);
    return keys;
}

namespace {

void append_rollout(PpoRollout& dst, PpoRollout&& src) {
    auto move_all = [](auto& d, auto& s) { d.insert(d.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end())); };
    move_all(dst.frames, src.frames);
    move_all(dst.actions, src.actions);
    move_all(dst.rewards, src.rewards);
    move_all(dst.old_log_probs, src.old_log_probs);
    move_all(dst.values, src.values);
    move_all(dst.prev_states, src.prev_states);
    move_all(dst.prev_actions, src.prev_actions);
    move_all(dst.noise, src.noise);
    move_all(dst.terminal, src.terminal);
}

std::vector<ng::Node> concat_nodes(std::vector<ng::Node> a, const std::vector<ng::Node>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

TrainResult run_training(const RunConfig& cfg, const EpisodeHook& on_episode, std::optional<std::size_t> poison) {
    cfg.validate();
    TrainResult result;
    result.output = cfg.run.output;
    fs::create_directories(result.output);
    {
        std::ofstream c(result.output / "config.ini");
        c << format_config(cfg);
        if (!c) throw IoError("train: cannot write " + (result.output / "config.ini").string());
    }
    MetricsWriter metrics(result.output / "metrics.tsv");

    Learner learner(cfg);
    Rng env_rng = stream(cfg.run.seed, Purpose::environment);
    Rng act_rng = stream(cfg.run.seed, Purpose::acting);
    Rng update_rng = stream(cfg.run.seed, Purpose::updates);
    Rng aug_rng = stream(cfg.run.seed, Purpose::augmentation);
    Rng noise_rng = stream(cfg.run.seed, Purpose::encoder_noise);
    DistractorControl env(cfg.env);
    SequenceReplay replay(std::max<std::size_t>(1, cfg.run.replay_capacity / cfg.env.episode_length), cfg.run.window);
    Adam dribo_opt(concat_nodes(learner.encoder().params().nodes(), learner.critic().params().nodes()),
                   {.lr = cfg.dribo.lr, .max_grad_norm = cfg.dribo.max_grad_norm});
    const bool sac = cfg.run.agent == AgentKind::sac;
    Adam rl_encoder_opt(learner.encoder().params().nodes(),
                        {.lr = sac ? cfg.sac.encoder_lr : cfg.ppo.lr, .max_grad_norm = sac ? 0.0 : cfg.ppo.max_grad_norm});
    RewardNormalizer normalizer(cfg.ppo.gamma);
    DriboLossOptions loss_options;
    loss_options.block_conditioning_grad = cfg.dribo.block_conditioning_grad;
    loss_options.shared_noise = cfg.dribo.shared_noise;

    Checkpoint last_good = learner.to_checkpoint();
    MetricAccumulator acc;
    double beta = 0.0;
    auto inject_fault = [&](std::size_t e) {
        if (!poison || *poison != e) return;
        ng::Node w = learner.encoder().params().entries().front().node;
        w.mutable_value()[0] = std::nan("");
    };
    auto dribo_step = [&](const SequenceBatch& raw) {
        if (cfg.dribo.disabled) return;
        const auto [v1, v2] = make_two_views(raw, cfg.augment, aug_rng);
        const DriboLossOutput out =
            dribo_loss(v1, v2, learner.encoder(), learner.critic(), beta, gaussian_noise(noise_rng), loss_options);
        if (!std::isfinite(out.total.item())) throw DomainError("train: non-finite dribo loss");
        learner.encoder().params().zero_grads();
        learner.critic().params().zero_grads();
        ng::backward(out.total);
        dribo_opt.step();
        learner.encoder().params().zero_grads();
        learner.critic().params().zero_grads();
        acc.add(out.metrics());
    };

    for (std::size_t e = 0; e < cfg.run.episodes; ++e) {
        beta = cfg.beta.at(static_cast<long>(e));
        acc.clear();
        try {
            if (sac) {
                PlayedEpisode played = play_episode(learner, env, BackgroundMode::train, ActMode::stochastic, env_rng,
                                                    act_rng, e < cfg.run.seed_episodes);
                result.env_steps += played.episode.length();
                result.episode_returns.push_back(played.total_return);
                metrics.write(result.env_steps, "episode/return", played.total_return);
                if (on_episode) on_episode(e, played.total_return);
                replay.push(std::move(played.episode));
                inject_fault(e);
                if (e + 1 >= cfg.run.seed_episodes)
                    for (std::size_t k = 0; k < cfg.run.updates_per_episode; ++k) {
                        const SequenceBatch batch = replay.sample(cfg.run.batch_size, update_rng);
                        acc.add(sac_update(learner.sac(), learner.encoder(), learner.target_encoder(), rl_encoder_opt,
                                           center_crop_batch(batch, cfg.augment), update_rng));
                        dribo_step(batch);
                    }
            } else {
                PpoRollout rollout;
                for (std::size_t r = 0; r < cfg.run.rollout_episodes; ++r) {
                    PlayedEpisode played =
                        play_episode(learner, env, BackgroundMode::train, ActMode::stochastic, env_rng, act_rng, false,
                                     cfg.ppo.normalize_rewards ? &normalizer : nullptr);
                    result.env_steps += played.episode.length();
                    result.episode_returns.push_back(played.total_return);
                    metrics.write(result.env_steps, "episode/return", played.total_return);
                    if (on_episode) on_episode(e, played.total_return);
                    append_rollout(rollout, std::move(played.rollout));
                    replay.push(std::move(played.episode));
                }
                inject_fault(e);
                acc.add(ppo_update(learner.ppo(), learner.encoder(), rl_encoder_opt, rollout, update_rng,
                                   [&] { dribo_step(replay.sample(cfg.run.batch_size, update_rng)); }));
            }
            if (!learner.all_finite()) throw DomainError("train: non-finite parameters");
        } catch (const DomainError& err) {
            save_checkpoint(result.output / "last_good.ckpt", last_good);
            throw TrainingAborted(std::string(err.what()) + " at episode " + std::to_string(e) +
                                  "; last good parameters written to " + (result.output / "last_good.ckpt").string());
        }
        metrics.write(result.env_steps, acc.means());
        last_good = learner.to_checkpoint();
        if (cfg.run.checkpoint_every > 0 && (e + 1) % cfg.run.checkpoint_every == 0)
            save_checkpoint(result.output / ("ep" + std::to_string(e + 1) + ".ckpt"), last_good);
        if (cfg.run.eval_every > 0 && (e + 1) % cfg.run.eval_every == 0) {
            const std::uint64_t eval_seed = stream(cfg.run.seed, Purpose::evaluation + e)();
            const double tr = evaluate_returns(learner, BackgroundMode::train, cfg.run.eval_episodes, eval_seed).mean;
            const double te = evaluate_returns(learner, BackgroundMode::test, cfg.run.eval_episodes, eval_seed).mean;
            metrics.write(result.env_steps, "eval/train_return", tr);
            metrics.write(result.env_steps, "eval/test_return", te);
            result.evaluations.push_back({e + 1, {tr, te}});
        }
        metrics.flush();
    }
    save_checkpoint(result.output / "final.ckpt", last_good);
    return result;
}

}  // namespace

TrainResult train(const RunConfig& config, const EpisodeHook& on_episode) {
    return run_training(config, on_episode, std::nullopt);
}

TrainResult train_with_fault(const RunConfig& config, std::size_t poison_episode) {
    return run_training(config, {}, poison_episode);
}

}  // namespace dribo
