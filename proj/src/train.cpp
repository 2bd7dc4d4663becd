#include "reliq/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace reliq::train {

double reward(Outcome outcome, double f_e2e) {
    switch (outcome) {
        case Outcome::success: return f_e2e;
        case Outcome::path_failed: return qcalc::kBaselineFidelity;
        case Outcome::dropped: return 0.0;
    }
    return 0.0;
}

std::vector<double> rollout_return(const std::vector<double>& rewards,
                                   double gamma) {
    std::vector<double> out(rewards.size(), 0.0);
    double acc = 0.0;
    for (size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw TrainError("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(Transition t) {
    if (!t.update_input.allFinite() || !t.h_prev.allFinite() ||
        !t.h_snapshot.allFinite() || !t.agent_obs.allFinite() ||
        !std::isfinite(t.ret)) {
        throw TrainError("non-finite transition feature");
    }
    if (t.ret < 0.0 || t.ret > 1.0 + 1e-12) {
        throw TrainError("return target outside [0, 1]");
    }
    if (t.action < 0 || t.action >= static_cast<int>(t.mask.size()) ||
        !t.mask[t.action]) {
        throw TrainError("stored action forbidden by its own mask");
    }
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(std::mt19937_64& rng) const {
    if (items_.empty()) throw TrainError("sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    return items_[pick(rng)];
}

std::optional<double> train_iteration(const ReplayBuffer& buffer,
                                      policy::PolicyNet& net,
                                      nn::AdamOptimizer& adam,
                                      const TrainConfig& cfg,
                                      std::mt19937_64& rng) {
    if (buffer.size() < static_cast<std::size_t>(cfg.batch)) {
        return std::nullopt;
    }
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
        const Transition& tr = buffer.sample(rng);
        nn::Mlp::Cache update_cache;
        nn::GruCell::Cache gru_cache;
        nn::Mlp::Cache q_cache;
        nn::Vector h;
        if (cfg.train_gnn) {
            const nn::Vector candidate =
                net.update_net.forward(tr.update_input, &update_cache);
            h = net.gru.step(tr.h_prev, candidate, &gru_cache);
        } else {
            h = tr.h_snapshot;
        }
        nn::Vector qin(policy::kAgentObsSize + policy::kHiddenWidth);
        qin.head(policy::kAgentObsSize) = tr.agent_obs;
        qin.tail(policy::kHiddenWidth) = h;
        const nn::Vector q = net.q_net.forward(qin, &q_cache);
        const double err = q(tr.action) - tr.ret;
        loss += err * err;

        nn::Vector d_q = nn::Vector::Zero(q.size());
        d_q(tr.action) = 2.0 * err / cfg.batch;
        const nn::Vector d_qin = net.q_net.backward(q_cache, d_q);
        if (cfg.train_gnn) {
            const nn::Vector d_h = d_qin.tail(policy::kHiddenWidth);
            const auto back = net.gru.backward(gru_cache, d_h);
            net.update_net.backward(update_cache, back.d_x);
        }
    }
    adam.step();
    return loss / cfg.batch;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

std::vector<std::pair<int, int>> pick_pairs(int n_nodes, int n_pairs,
                                            std::mt19937_64& rng) {
    std::vector<std::pair<int, int>> pairs;
    std::uniform_int_distribution<int> node(0, n_nodes - 1);
    for (int i = 0; i < n_pairs; ++i) {
        const int s = node(rng);
        int d = node(rng);
        while (d == s) d = node(rng);
        pairs.emplace_back(s, d);
    }
    return pairs;
}

double epsilon_at(const TrainConfig& cfg, long step) {
    return std::max(cfg.eps_floor,
                    cfg.eps_start * std::pow(cfg.eps_decay,
                                             static_cast<double>(step)));
}

struct EpisodeStats {
    long successes = 0;
    double fidelity_sum = 0.0;
    long terminals = 0;
    double reward_sum = 0.0;
    long steps = 0;
};

// One episode on a fresh topology. `net` null means the uniform-random
// policy; `global_step` null means greedy evaluation (epsilon = 0).
EpisodeStats run_episode(const TrainConfig& cfg, const policy::PolicyNet* net,
                         ReplayBuffer* buffer, long* global_step,
                         std::uint64_t topo_seed, std::uint64_t sim_seed,
                         std::mt19937_64& rng, long max_steps,
                         const std::function<void()>& on_step = {}) {
    const auto topology = topo::generate_random(cfg.n_nodes, topo_seed);
    const auto pairs = pick_pairs(cfg.n_nodes, cfg.n_pairs, rng);
    sim::Simulation s(topology, cfg.sim, pairs, sim_seed);
    const int n_agents = static_cast<int>(pairs.size());

    policy::MonitorState st;
    st.reset(n_agents, topology.node_count());

    struct Traj {
        std::vector<Transition> items;
        std::vector<double> rewards;
    };
    std::vector<Traj> traj(n_agents);
    EpisodeStats stats;

    for (long step = 0; step < std::min<long>(cfg.episode_length, max_steps);
         ++step) {
        std::vector<nn::Vector> pending_input(n_agents);
        std::vector<nn::Vector> pending_h_prev(n_agents);

        const auto hook = [&](sim::Simulation& ss) {
            if (!net) return;
            if (buffer) {
                for (int a = 0; a < n_agents; ++a) {
                    const int node = ss.agents()[a].current;
                    pending_input[a] =
                        policy::build_update_input(ss, st, node, a);
                    pending_h_prev[a] = st.hidden[a][node];
                }
            }
            policy::monitor_cycle(ss, *net, st);
        };

        const auto decide = [&](sim::Simulation& ss) {
            std::vector<int> actions(n_agents, sim::kActionAbort);
            const double eps =
                global_step ? epsilon_at(cfg, *global_step) : 0.0;
            for (int a = 0; a < n_agents; ++a) {
                const auto mask = policy::build_action_mask(ss, a);
                if (std::none_of(mask.begin(), mask.end(),
                                 [](bool m) { return m; })) {
                    continue;  // dead end: abort
                }
                int action;
                if (net) {
                    const nn::Vector q = policy::q_values(ss, *net, st, a);
                    action = policy::select_action(q, mask, eps, rng);
                } else {
                    nn::Vector q = nn::Vector::Zero(policy::kMaxDegree);
                    action = policy::select_action(q, mask, 1.0, rng);
                }
                actions[a] = action;
                if (buffer) {
                    Transition tr;
                    tr.update_input = pending_input[a];
                    tr.h_prev = pending_h_prev[a];
                    tr.h_snapshot = st.hidden[a][ss.agents()[a].current];
                    tr.agent_obs = policy::build_agent_observation(ss, a);
                    tr.mask = mask;
                    tr.action = action;
                    tr.pair = a;
                    tr.step = global_step ? *global_step : step;
                    traj[a].items.push_back(std::move(tr));
                    traj[a].rewards.push_back(0.0);
                }
            }
            return actions;
        };

        const auto events = s.env_step_decide(decide, hook);
        for (const auto& ev : events) {
            double r = 0.0;
            bool terminal = false;
            if (ev.event == "success") {
                r = reward(Outcome::success, ev.fidelity);
                terminal = true;
                stats.successes += 1;
                stats.fidelity_sum += ev.fidelity;
            } else if (ev.event.rfind("chain_failure", 0) == 0) {
                r = reward(Outcome::path_failed, 0.0);
                terminal = true;
            } else if (ev.event.rfind("failure", 0) == 0) {
                r = reward(Outcome::dropped, 0.0);
                terminal = true;
            }
            if (!terminal) continue;
            stats.terminals += 1;
            stats.reward_sum += r;
            if (buffer) {
                auto& tj = traj[ev.agent];
                if (!tj.rewards.empty()) {
                    tj.rewards.back() = r;
                    const auto returns =
                        rollout_return(tj.rewards, cfg.gamma);
                    for (size_t i = 0; i < tj.items.size(); ++i) {
                        tj.items[i].ret = returns[i];
                        buffer->push(std::move(tj.items[i]));
                    }
                }
                tj.items.clear();
                tj.rewards.clear();
            }
        }
        stats.steps += 1;
        if (global_step) *global_step += 1;
        if (on_step) on_step();
    }
    return stats;
}

}  // namespace

TrainResult training_run(const TrainConfig& cfg, std::uint64_t seed,
                         const std::string& checkpoint_path,
                         const std::string& curve_csv_path) {
    TrainResult res;
    res.net = policy::PolicyNet(mix(seed, 0));
    ReplayBuffer buffer(cfg.buffer_capacity);

    std::vector<nn::ParamTensor*> trainable;
    if (cfg.train_gnn) {
        for (auto* p : res.net.update_net.params()) trainable.push_back(p);
        for (auto* p : res.net.gru.params()) trainable.push_back(p);
    }
    for (auto* p : res.net.q_net.params()) trainable.push_back(p);
    nn::AdamConfig acfg;
    acfg.lr = cfg.lr;
    nn::AdamOptimizer adam(trainable, acfg);

    std::mt19937_64 rng(mix(seed, 1));
    long global_step = 0;
    long episode = 0;
    double loss_sum = 0.0;
    int loss_n = 0;

    while (global_step < cfg.total_steps) {
        // Regression steps fire on env-step boundaries inside the episode.
        const auto on_step = [&]() {
            if (global_step % cfg.env_steps_per_iteration != 0) return;
            for (int u = 0; u < cfg.updates_per_iteration; ++u) {
                const auto l = train_iteration(buffer, res.net, adam, cfg, rng);
                if (l) {
                    loss_sum += *l;
                    ++loss_n;
                }
            }
        };
        const auto stats = run_episode(
            cfg, &res.net, &buffer, &global_step, mix(seed, 1000 + episode),
            mix(seed, 5000000 + episode), rng, cfg.total_steps - global_step,
            on_step);
        CurvePoint pt;
        pt.step = global_step;
        pt.edr = stats.steps > 0
                     ? static_cast<double>(stats.successes) / stats.steps
                     : 0.0;
        pt.mean_reward =
            stats.terminals > 0 ? stats.reward_sum / stats.terminals : 0.0;
        pt.loss = loss_n > 0 ? loss_sum / loss_n : 0.0;
        pt.epsilon = epsilon_at(cfg, global_step);
        res.curve.push_back(pt);
        loss_sum = 0.0;
        loss_n = 0;
        ++episode;
    }

    if (!checkpoint_path.empty()) {
        nn::save_checkpoint(res.net.parameters(), checkpoint_path);
    }
    if (!curve_csv_path.empty()) {
        std::ofstream out(curve_csv_path);
        out << "step,edr,mean_reward,loss,epsilon\n";
        for (const auto& pt : res.curve) {
            out << pt.step << "," << pt.edr << "," << pt.mean_reward << ","
                << pt.loss << "," << pt.epsilon << "\n";
        }
    }
    return res;
}

EvalResult evaluate(const policy::PolicyNet& net, const TrainConfig& cfg,
                    std::uint64_t seed, int episodes) {
    std::mt19937_64 rng(mix(seed, 2));
    EvalResult out;
    for (int ep = 0; ep < episodes; ++ep) {
        const auto stats =
            run_episode(cfg, &net, nullptr, nullptr, mix(seed, 9000 + ep),
                        mix(seed, 7000000 + ep), rng, cfg.episode_length);
        out.successes += stats.successes;
        out.mean_fidelity += stats.fidelity_sum;
    }
    out.edr_per_episode =
        episodes > 0 ? static_cast<double>(out.successes) / episodes : 0.0;
    out.mean_fidelity =
        out.successes > 0 ? out.mean_fidelity / out.successes : 0.0;
    return out;
}

EvalResult evaluate_random(const TrainConfig& cfg, std::uint64_t seed,
                           int episodes) {
    std::mt19937_64 rng(mix(seed, 3));
    EvalResult out;
    for (int ep = 0; ep < episodes; ++ep) {
        const auto stats =
            run_episode(cfg, nullptr, nullptr, nullptr, mix(seed, 9000 + ep),
                        mix(seed, 7000000 + ep), rng, cfg.episode_length);
        out.successes += stats.successes;
        out.mean_fidelity += stats.fidelity_sum;
    }
    out.edr_per_episode =
        episodes > 0 ? static_cast<double>(out.successes) / episodes : 0.0;
    out.mean_fidelity =
        out.successes > 0 ? out.mean_fidelity / out.successes : 0.0;
    return out;
}

}  // namespace reliq::train
