#include "dribo/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace dribo {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
        throw ConfigError("config: " + key + " expects a number, got '" + s + "'");
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + s + "'");
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), nullptr, 10);
    if (errno == ERANGE) throw ConfigError("config: " + key + " is out of range");
    return v;
}

bool to_bool(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config: " + key + " expects true or false, got '" + s + "'");
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

class Fields {
public:
    std::vector<Field> list;

    void num(const char* sec, const char* key, double& v) {
        const std::string name = std::string(sec) + "." + key;
        list.push_back({sec, key, [&v] { return fmt(v); }, [&v, name](const std::string& s) { v = to_double(name, s); }});
    }
    void size(const char* sec, const char* key, std::size_t& v) {
        const std::string name = std::string(sec) + "." + key;
        list.push_back({sec, key, [&v] { return std::to_string(v); },
                        [&v, name](const std::string& s) { v = static_cast<std::size_t>(to_uint(name, s)); }});
    }
    void u64(const char* sec, const char* key, std::uint64_t& v) {
        const std::string name = std::string(sec) + "." + key;
        list.push_back({sec, key, [&v] { return std::to_string(v); }, [&v, name](const std::string& s) { v = to_uint(name, s); }});
    }
    void slong(const char* sec, const char* key, long& v) {
        const std::string name = std::string(sec) + "." + key;
        list.push_back({sec, key, [&v] { return std::to_string(v); }, [&v, name](const std::string& s) {
                            const double d = to_double(name, s);
                            if (d != std::floor(d) || std::abs(d) > 1e15)
                                throw ConfigError("config: " + name + " expects an integer");
                            v = static_cast<long>(d);
                        }});
    }
    void flag(const char* sec, const char* key, bool& v) {
        const std::string name = std::string(sec) + "." + key;
        list.push_back({sec, key, [&v] { return std::string(v ? "true" : "false"); },
                        [&v, name](const std::string& s) { v = to_bool(name, s); }});
    }
    void text(const char* sec, const char* key, std::string& v) {
        list.push_back({sec, key, [&v] { return v; }, [&v](const std::string& s) { v = trim(s); }});
    }
    void custom(const char* sec, const char* key, std::function<std::string()> get,
                std::function<void(const std::string&)> set) {
        list.push_back({sec, key, std::move(get), std::move(set)});
    }
};

Fields fields_of(RunConfig& c) {
    Fields f;
    f.custom("run", "agent", [&c] { return std::string(c.run.agent == AgentKind::sac ? "sac" : "ppo"); },
             [&c](const std::string& s) {
                 const std::string v = trim(s);
                 if (v == "sac") c.run.agent = AgentKind::sac;
                 else if (v == "ppo") c.run.agent = AgentKind::ppo;
                 else throw ConfigError("config: run.agent must be sac or ppo, got '" + v + "'");
             });
    f.u64("run", "seed", c.run.seed);
    f.text("run", "output", c.run.output);
    f.size("run", "episodes", c.run.episodes);
    f.size("run", "seed_episodes", c.run.seed_episodes);
    f.size("run", "updates_per_episode", c.run.updates_per_episode);
    f.size("run", "rollout_episodes", c.run.rollout_episodes);
    f.size("run", "batch_size", c.run.batch_size);
    f.size("run", "window", c.run.window);
    f.size("run", "replay_capacity", c.run.replay_capacity);
    f.size("run", "checkpoint_every", c.run.checkpoint_every);
    f.size("run", "eval_every", c.run.eval_every);
    f.size("run", "eval_episodes", c.run.eval_episodes);

    f.size("env", "render_size", c.env.render_size);
    f.size("env", "episode_length", c.env.episode_length);
    f.flag("env", "discrete_actions", c.env.discrete_actions);
    f.size("env", "discrete_count", c.env.discrete_count);
    f.size("env", "train_pool", c.env.train_pool);
    f.size("env", "test_pool", c.env.test_pool);
    f.flag("env", "fixed_background", c.env.fixed_background);
    f.num("env", "dt", c.env.dt);
    f.num("env", "gravity", c.env.gravity);
    f.num("env", "damping", c.env.damping);
    f.num("env", "max_torque", c.env.max_torque);
    f.num("env", "reset_spread", c.env.reset_spread);

    f.size("model", "embed_hidden", c.model.embed_hidden);
    f.size("model", "embed_dim", c.model.embed_dim);
    f.size("model", "deter_dim", c.model.deter_dim);
    f.size("model", "stoch_dim", c.model.stoch_dim);
    f.size("model", "head_hidden", c.model.head_hidden);
    f.size("model", "action_embed_hidden", c.model.action_embed_hidden);
    f.size("model", "action_embed_dim", c.model.action_embed_dim);

    f.size("augment", "crop", c.crop);
    f.num("augment", "flip_prob", c.augment.flip_prob);
    f.custom("augment", "flip_axis",
             [&c] { return std::string(c.augment.flip_axis == FlipAxis::horizontal ? "horizontal" : "vertical"); },
             [&c](const std::string& s) {
                 const std::string v = trim(s);
                 if (v == "horizontal") c.augment.flip_axis = FlipAxis::horizontal;
                 else if (v == "vertical") c.augment.flip_axis = FlipAxis::vertical;
                 else throw ConfigError("config: augment.flip_axis must be horizontal or vertical");
             });
    f.size("augment", "cutout_max", c.augment.cutout_max);
    f.num("augment", "intensity_low", c.augment.intensity_low);
    f.num("augment", "intensity_high", c.augment.intensity_high);
    f.num("augment", "grayscale_prob", c.augment.grayscale_prob);
    f.flag("augment", "per_frame", c.augment.per_frame);

    f.num("beta", "start", c.beta.schedule.beta_start);
    f.num("beta", "end", c.beta.schedule.beta_end);
    f.slong("beta", "start_episode", c.beta.schedule.start_episode);
    f.slong("beta", "end_episode", c.beta.schedule.end_episode);
    f.flag("beta", "ablate", c.beta.ablate);

    f.num("dribo", "lr", c.dribo.lr);
    f.num("dribo", "max_grad_norm", c.dribo.max_grad_norm);
    f.num("dribo", "critic_init_noise", c.dribo.critic_init_noise);
    f.flag("dribo", "block_conditioning_grad", c.dribo.block_conditioning_grad);
    f.flag("dribo", "shared_noise", c.dribo.shared_noise);
    f.flag("dribo", "disabled", c.dribo.disabled);

    f.size("sac", "hidden", c.sac.hidden);
    f.num("sac", "gamma", c.sac.gamma);
    f.num("sac", "tau_q", c.sac.tau_q);
    f.num("sac", "tau_encoder", c.sac.tau_encoder);
    f.num("sac", "init_alpha", c.sac.init_alpha);
    f.custom("sac", "target_entropy", [&c] { return c.sac.target_entropy ? fmt(*c.sac.target_entropy) : "auto"; },
             [&c](const std::string& s) {
                 if (trim(s) == "auto") c.sac.target_entropy.reset();
                 else c.sac.target_entropy = to_double("sac.target_entropy", s);
             });
    f.num("sac", "actor_lr", c.sac.actor_lr);
    f.num("sac", "critic_lr", c.sac.critic_lr);
    f.num("sac", "alpha_lr", c.sac.alpha_lr);
    f.num("sac", "encoder_lr", c.sac.encoder_lr);
    f.num("sac", "log_std_min", c.sac.log_std_min);
    f.num("sac", "log_std_max", c.sac.log_std_max);
    f.flag("sac", "critic_trains_encoder", c.sac.critic_trains_encoder);

    f.size("ppo", "hidden", c.ppo.hidden);
    f.num("ppo", "gamma", c.ppo.gamma);
    f.num("ppo", "gae_lambda", c.ppo.gae_lambda);
    f.num("ppo", "clip", c.ppo.clip);
    f.num("ppo", "entropy_coef", c.ppo.entropy_coef);
    f.num("ppo", "value_coef", c.ppo.value_coef);
    f.num("ppo", "lr", c.ppo.lr);
    f.num("ppo", "max_grad_norm", c.ppo.max_grad_norm);
    f.size("ppo", "epochs", c.ppo.epochs);
    f.size("ppo", "minibatches", c.ppo.minibatches);
    f.flag("ppo", "normalize_rewards", c.ppo.normalize_rewards);
    f.flag("ppo", "normalize_advantages", c.ppo.normalize_advantages);
    f.flag("ppo", "train_encoder", c.ppo.train_encoder);
    return f;
}

std::size_t default_crop(std::size_t render) { return render - std::max<std::size_t>(1, render / 7); }

}  // namespace

void RunConfig::finalize() {
    env.validate();
    augment.source_height = augment.source_width = env.render_size;
    augment.target_height = augment.target_width = crop == 0 ? default_crop(env.render_size) : crop;
    model.obs_dim = augment.target_height * augment.target_width;
    model.discrete_actions = env.discrete_actions;
    model.action_dim = env.action_dim();
    sac.state_dim = ppo.state_dim = model.state_dim();
    sac.action_dim = env.action_dim();
    ppo.num_actions = env.discrete_actions ? env.discrete_count : 2;
    validate();
}

void RunConfig::validate() const {
    try {
        env.validate();
        model.validate();
        augment.validate();
        beta.schedule.validate();
        if (run.agent == AgentKind::sac) sac.validate();
        else ppo.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (augment.source_height != env.render_size || augment.source_width != env.render_size)
        throw ConfigError("config: augmentation source must match the render size");
    if (run.agent == AgentKind::sac && env.discrete_actions)
        throw ConfigError("config: the sac agent needs continuous actions (env.discrete_actions = false)");
    if (run.agent == AgentKind::ppo && !env.discrete_actions)
        throw ConfigError("config: the ppo agent needs discrete actions (env.discrete_actions = true)");
    if (run.episodes == 0) throw ConfigError("config: run.episodes must be positive");
    if (run.batch_size == 0) throw ConfigError("config: run.batch_size must be positive");
    if (run.window < 2) throw ConfigError("config: run.window must be at least 2");
    if (run.window > env.episode_length) throw ConfigError("config: run.window exceeds env.episode_length");
    if (run.replay_capacity < env.episode_length)
        throw ConfigError("config: run.replay_capacity must hold at least one episode");
    if (run.rollout_episodes == 0) throw ConfigError("config: run.rollout_episodes must be positive");
    if (run.eval_episodes == 0) throw ConfigError("config: run.eval_episodes must be positive");
    if (run.output.empty()) throw ConfigError("config: run.output must not be empty");
    if (!(dribo.lr > 0.0) || !(dribo.max_grad_norm >= 0.0) || !(dribo.critic_init_noise >= 0.0))
        throw ConfigError("config: bad dribo optimizer settings");
}

RunConfig default_config() {
    RunConfig c;
    c.sac.hidden = 256;
    c.ppo.hidden = 256;
    c.ppo.minibatches = 8;
    c.ppo.lr = 3e-4;
    c.finalize();
    return c;
}

RunConfig full_scale_config() {
    RunConfig c = default_config();
    c.run.batch_size = 8;
    c.run.window = 32;
    c.run.replay_capacity = 1000000;
    c.model.deter_dim = 200;
    c.model.stoch_dim = 30;
    c.model.embed_hidden = 256;
    c.model.embed_dim = 200;
    c.model.head_hidden = 200;
    c.model.action_embed_hidden = 64;
    c.sac.hidden = 1024;
    c.sac.actor_lr = c.sac.critic_lr = c.sac.encoder_lr = 1e-5;
    c.sac.alpha_lr = 1e-4;
    c.ppo.hidden = 1024;
    c.ppo.lr = 5e-4;
    c.finalize();
    return c;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    Fields f = fields_of(base);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' must sit under a [section] header");
        bool known_section = false;
        for (const auto& fld : f.list) known_section |= fld.section == section;
        if (!known_section) throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            auto it = std::find_if(f.list.begin(), f.list.end(),
                                   [&](const Field& x) { return x.section == section && x.key == key; });
            if (it == f.list.end()) throw ConfigError("config: unknown key " + section + "." + key);
            it->set(value.data());
        }
    }
    base.finalize();
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& config) {
    RunConfig copy = config;
    Fields f = fields_of(copy);
    std::string out, current;
    for (const auto& fld : f.list) {
        if (fld.section != current) {
            if (!current.empty()) out += "\n";
            out += "[" + fld.section + "]\n";
            current = fld.section;
        }
        out += fld.key + " = " + fld.get() + "\n";
    }
    return out;
}

std::map<std::string, std::string> config_to_map(const RunConfig& config) {
    RunConfig copy = config;
    std::map<std::string, std::string> out;
    for (const auto& fld : fields_of(copy).list) out[fld.section + "." + fld.key] = fld.get();
    return out;
}

RunConfig config_from_map(const std::map<std::string, std::string>& kv) {
    RunConfig c = default_config();
    Fields f = fields_of(c);
    for (const auto& [name, value] : kv) {
        auto it = std::find_if(f.list.begin(), f.list.end(),
                               [&](const Field& x) { return x.section + "." + x.key == name; });
        if (it == f.list.end()) throw ConfigError("config: unknown key " + name);
        it->set(value);
    }
    c.finalize();
    return c;
}

}  // namespace dribo
