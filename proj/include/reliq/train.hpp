#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reliq/policy.hpp"

// Q-learning on rollout returns: reward shaping, discounted returns,
// replay, mini-batch regression and the episode loop over fresh random
// topologies.
namespace reliq::train {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Terminal outcome of one routing attempt.
enum class Outcome {
    success,      // end-to-end entanglement established
    path_failed,  // destination reached, entanglement failed
    dropped       // TTL, dead end or depleted edge en route
};

// Terminal reward: success pays the end-to-end fidelity, a found path
// whose entanglement failed pays the baseline fidelity 0.5, everything
// else pays 0. Intermediate steps pay 0.
double reward(Outcome outcome, double f_e2e);

// Discounted returns R_t = sum_k gamma^(k-t) r_k by backward accumulation.
std::vector<double> rollout_return(const std::vector<double>& rewards,
                                   double gamma);

struct Transition {
    nn::Vector update_input;  // node observation + neighbor messages
    nn::Vector h_prev;        // hidden state before the monitoring cycle
    nn::Vector h_snapshot;    // hidden state at decision time
    nn::Vector agent_obs;
    std::vector<bool> mask;
    int action = 0;
    double ret = 0.0;  // discounted return target
    int pair = 0;
    long step = 0;
};

struct TrainConfig {
    double gamma = 0.95;
    double lr = 0.0005;
    double eps_start = 1.0;
    double eps_decay = 0.99999;  // per env step
    double eps_floor = 0.01;
    int batch = 32;
    int env_steps_per_iteration = 200;
    int updates_per_iteration = 4;
    std::size_t buffer_capacity = 100000;
    int episode_length = 500;
    long total_steps = 0;  // env step budget
    // Backpropagate one step through the update network and GRU at the
    // decision node (the message head stays fixed). When false only the
    // Q head trains against the snapshotted hidden state.
    bool train_gnn = true;
    int n_nodes = 10;
    int n_pairs = 1;
    sim::SimConfig sim;
};

// Fixed-capacity ring buffer with uniform sampling. push rejects
// non-finite features, returns outside [0, 1] and actions their own mask
// forbids.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(Transition t);
    [[nodiscard]] std::size_t size() const { return items_.size(); }
    [[nodiscard]] const Transition& sample(std::mt19937_64& rng) const;

  private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
};

// One mini-batch regression step of q[action] onto the stored return.
// Returns the batch loss, or nullopt when the buffer is still too small.
std::optional<double> train_iteration(const ReplayBuffer& buffer,
                                      policy::PolicyNet& net,
                                      nn::AdamOptimizer& adam,
                                      const TrainConfig& cfg,
                                      std::mt19937_64& rng);

struct CurvePoint {
    long step = 0;
    double edr = 0.0;          // deliveries per env step in the window
    double mean_reward = 0.0;  // over terminal events in the window
    double loss = 0.0;
    double epsilon = 0.0;
};

struct TrainResult {
    policy::PolicyNet net;
    std::vector<CurvePoint> curve;
};

// Full training loop: a fresh random topology every episode, epsilon-
// greedy rollouts, return-labeled transitions into the buffer, periodic
// regression steps. Optionally writes a checkpoint and a CSV curve.
TrainResult training_run(const TrainConfig& cfg, std::uint64_t seed,
                         const std::string& checkpoint_path = "",
                         const std::string& curve_csv_path = "");

struct EvalResult {
    double edr_per_episode = 0.0;
    double mean_fidelity = 0.0;
    long successes = 0;
};

// Greedy (epsilon = 0) policy evaluation on held-out topology seeds.
EvalResult evaluate(const policy::PolicyNet& net, const TrainConfig& cfg,
                    std::uint64_t seed, int episodes);
// Uniform-random policy under the same harness, masks included.
EvalResult evaluate_random(const TrainConfig& cfg, std::uint64_t seed,
                           int episodes);

}  // namespace reliq::train
