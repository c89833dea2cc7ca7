#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "banditmatch/common.hpp"

namespace bmatch::world {

enum class ActType { inform, request, offer, book, nooffer, bye };

std::string to_string(ActType t);

inline constexpr int kNoSlot = -1;
inline constexpr int kGeneralDomain = -1;

/// One (domain, act type, slot) triple of the agent's action vocabulary.
/// Slots index the domain's informable slots first, then its requestable
/// ones. `bye` belongs to the pseudo-domain "general".
struct AtomicAction {
  int domain = kGeneralDomain;
  ActType act = ActType::bye;
  int slot = kNoSlot;
  friend bool operator==(const AtomicAction&, const AtomicAction&) = default;
};

struct Domain {
  std::string name;
  std::vector<std::string> informable;
  std::vector<std::vector<std::string>> values;  // per informable slot
  std::vector<std::string> requestable;
  /// entities[e][s] = value index of informable slot s. Requestable values
  /// are implied by the entity id.
  std::vector<std::vector<int>> entities;

  int num_informable() const { return static_cast<int>(informable.size()); }
  int num_requestable() const { return static_cast<int>(requestable.size()); }
  int num_slots() const { return num_informable() + num_requestable(); }
  bool is_requestable(int slot) const { return slot >= num_informable() && slot < num_slots(); }
  std::string slot_name(int slot) const;
  friend bool operator==(const Domain&, const Domain&) = default;
};

struct WorldSizes {
  int domains = 3;
  int informable = 3;
  int requestable = 3;
  int values = 3;
  int entities = 8;
};

/// Domains, slots, database and the derived action vocabulary and state
/// layout.
///
/// Vocabulary order, per domain: inform(slot) for every slot, request(slot)
/// for every informable slot, then offer, book, nooffer; one global bye
/// comes last.
///
/// State layout (all blocks concatenated in this order):
///   per domain, per slot: constraint-expressed, request-pending, informed
///   per domain: DB match bucket one-hot {0, 1, 2-3, >=4}, set only while
///     the domain is active
///   per domain: last-turn user acts (inform per informable, request per
///     requestable, book); then one user-bye bit
///   per domain: booking-requested, offered, booked
///   per domain: active
///   turn bucket one-hot {0, 1-2, 3-5, 6-9, >=10}
class WorldSchema {
 public:
  WorldSchema() = default;
  explicit WorldSchema(std::vector<Domain> domains);

  /// Synthetic world with the given sizes; entities are distinct value
  /// combinations drawn from `seed`.
  static WorldSchema generate(const WorldSizes& sizes, std::uint64_t seed);
  /// 3 domains x (3 informable + 3 requestable) x 8 entities.
  static WorldSchema default_world();

  const std::vector<Domain>& domains() const { return domains_; }
  const Domain& domain(int d) const { return domains_.at(static_cast<std::size_t>(d)); }
  int num_domains() const { return static_cast<int>(domains_.size()); }

  int num_actions() const { return static_cast<int>(actions_.size()); }
  const AtomicAction& action(int index) const { return actions_.at(static_cast<std::size_t>(index)); }
  int action_index(const AtomicAction& a) const;
  int action_index(int domain, ActType act, int slot = kNoSlot) const;
  std::string action_name(int index) const;

  int state_dim() const { return state_dim_; }

  // Offsets into the state vector.
  int slot_flag_offset(int domain, int slot) const;  // 3 flags
  int db_bucket_offset(int domain) const;             // 4 flags
  int user_act_offset(int domain) const;              // informable + requestable + 1
  int user_bye_offset() const { return user_bye_offset_; }
  int booking_offset(int domain) const;               // 3 flags
  int active_offset(int domain) const;
  int turn_bucket_offset() const { return turn_offset_; }
  static constexpr int kTurnBuckets = 5;

  friend bool operator==(const WorldSchema& a, const WorldSchema& b) { return a.domains_ == b.domains_; }

 private:
  void build_layout();

  std::vector<Domain> domains_;
  std::vector<AtomicAction> actions_;
  std::vector<int> action_base_;  // first inform index per domain
  int bye_index_ = 0;
  std::vector<int> slot_flag_base_, db_base_, user_act_base_, booking_base_, active_base_;
  int user_bye_offset_ = 0;
  int turn_offset_ = 0;
  int state_dim_ = 0;
};

/// Parses the human-readable world grammar (see docs/FORMATS.md).
WorldSchema parse_world(std::string_view text);
std::string world_to_text(const WorldSchema& schema);
WorldSchema load_world(const std::string& path);
void save_world(const std::string& path, const WorldSchema& schema);

struct DomainGoal {
  int domain = 0;
  std::vector<std::pair<int, int>> constraints;  // (informable slot, value)
  std::vector<int> requests;                     // requestable slot ids
  bool booking_required = false;
  friend bool operator==(const DomainGoal&, const DomainGoal&) = default;
};

struct UserGoal {
  std::vector<DomainGoal> domains;
  const DomainGoal* find(int domain) const;
  int total_requests() const;
  friend bool operator==(const UserGoal&, const UserGoal&) = default;
};

/// Probability of a goal spanning 1, 2, 3 domains (capped by the schema).
inline constexpr double kGoalDomainWeights[3] = {0.5, 0.35, 0.15};

/// Samples a satisfiable goal: a target entity is drawn per domain and the
/// constraints copy a non-empty random subset of its values.
UserGoal sample_goal(const WorldSchema& schema, Rng& rng);

/// Every goal of a one-domain schema: all non-empty constraint subsets of
/// every entity's values, all non-empty request subsets, with and without
/// booking. Duplicates removed.
std::vector<UserGoal> enumerate_goals(const WorldSchema& schema, int domain = 0);

inline constexpr int kDontCare = -2;
inline constexpr int kUnexpressed = -1;

struct UserAct {
  enum class Kind { inform, request, book, bye };
  Kind kind = Kind::bye;
  int domain = kGeneralDomain;
  int slot = kNoSlot;
  int value = kUnexpressed;  // inform only; kDontCare allowed
  friend bool operator==(const UserAct&, const UserAct&) = default;
};

std::string to_string(const UserAct& act, const WorldSchema& schema);

/// What the agent can observe so far in a dialog.
struct DomainTrack {
  bool active = false;
  std::vector<int> constraint;       // per informable slot: value, kDontCare or kUnexpressed
  std::vector<bool> request_pending;  // per slot
  std::vector<bool> informed;         // per slot
  bool booking_requested = false;
  bool offered = false;
  bool booked = false;
};

struct DialogContext {
  std::vector<DomainTrack> domains;
  std::vector<UserAct> last_user_acts;
  int turn = 0;  // agent turns completed

  static DialogContext start(const WorldSchema& schema);
};

std::vector<int> matching_entities(const WorldSchema& schema, int domain,
                                   std::span<const int> constraints);
int match_count(const WorldSchema& schema, const DialogContext& ctx, int domain);
/// Entity an offer/book in this domain refers to: the first database match.
std::optional<int> resolved_entity(const WorldSchema& schema, std::span<const int> constraints,
                                   int domain);

void apply_user_acts(const WorldSchema& schema, DialogContext& ctx, const std::vector<UserAct>& acts);
void apply_agent_actions(const WorldSchema& schema, DialogContext& ctx, const ActionSet& actions);

std::vector<double> encode_state(const WorldSchema& schema, const DialogContext& ctx);

/// Rule-based expert. Per active domain with m database matches:
///   m = 0                              -> nooffer
///   m > 1 and an unexpressed constraint -> request the first one
///   otherwise (entity resolved)        -> inform every pending request;
///       book (plus offer if not yet offered) when booking was requested
///       and not done; offer when nothing is pending and nothing offered.
/// Responds {bye} to a user bye.
ActionSet expert_respond(const WorldSchema& schema, const DialogContext& ctx);

/// Agenda-based user. The agenda holds, per goal domain in order: an inform
/// of the first constraint, a request per requested slot, and a booking
/// request when booking is required. Remaining constraints are only given
/// when the agent asks for them.
class UserSimulator {
 public:
  UserSimulator(const WorldSchema& schema, UserGoal goal);

  struct Step {
    std::vector<UserAct> acts;
    bool terminated = false;
  };

  /// Opening turn: the first (at most two) agenda items.
  std::vector<UserAct> start();
  /// Reacts to the agent's action set.
  Step step(const ActionSet& agent_actions);

  bool goal_complete() const;
  const UserGoal& goal() const { return goal_; }
  /// True if the requested slot is still wanted and unanswered.
  bool request_open(int domain, int slot) const;
  std::optional<int> booked_entity(int domain) const;

  static constexpr int kMaxAgendaItemsPerTurn = 2;

 private:
  struct DomainProgress {
    std::vector<int> expressed;     // per informable slot
    std::vector<bool> answered;     // per slot (requestables used)
    std::optional<int> booked;
  };
  bool item_done(const UserAct& act) const;
  DomainProgress& progress(int domain);
  const DomainProgress* progress_if(int domain) const;

  const WorldSchema* schema_;
  UserGoal goal_;
  std::vector<UserAct> agenda_;
  std::size_t agenda_pos_ = 0;
  std::vector<std::pair<int, DomainProgress>> progress_;
  std::vector<UserAct> issued_;  // acts the user has uttered, in order
};

struct EpisodeMetrics {
  int turns = 0;
  double match = 0.0;
  double inform_recall = 0.0;
  double inform_precision = 0.0;
  double inform_f1 = 0.0;
  double success = 0.0;
};

double f1_score(double precision, double recall);

struct EpisodeConfig {
  int max_turns = 20;
};

/// One agent turn of an episode trace.
struct TurnRecord {
  std::vector<UserAct> user_acts;
  std::vector<double> state;
  ActionSet agent_actions;
};

/// Anything that maps the observable context (and its encoding) to an
/// action set.
using Agent = std::function<ActionSet(const DialogContext& ctx, std::span<const double> state)>;

Agent expert_agent(const WorldSchema& schema);

/// Runs one goal-driven dialog. The dialog ends when the user's goal is
/// complete, the agent says bye, or max_turns agent turns have passed.
/// Inform precision counts an agent inform as useful iff it answers a
/// requested slot that was still unanswered; recall is answered requests
/// over goal requests; match requires every booking domain's booked entity
/// to satisfy all goal constraints.
EpisodeMetrics run_episode(const Agent& agent, const WorldSchema& schema, const UserGoal& goal,
                           const EpisodeConfig& cfg = {}, std::vector<TurnRecord>* trace = nullptr);

std::string trace_to_jsonl(const WorldSchema& schema, const std::vector<TurnRecord>& trace);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

/// Mean and population standard deviation per metric. Success is reported
/// as a percentage.
struct AggregateMetrics {
  std::size_t count = 0;
  MeanStd turns, match, inform_recall, inform_precision, inform_f1, success_pct;
};

AggregateMetrics compute_aggregate(std::span<const EpisodeMetrics> episodes);
MeanStd mean_std(std::span<const double> values);

/// "76.7 ± 2.83"-style cell.
std::string format_mean_std(const MeanStd& v, int mean_digits, int std_digits);

}  // namespace bmatch::world
