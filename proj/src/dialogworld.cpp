#include "banditmatch/dialogworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace bmatch::world {

std::string to_string(ActType t) {
  switch (t) {
    case ActType::inform: return "inform";
    case ActType::request: return "request";
    case ActType::offer: return "offer";
    case ActType::book: return "book";
    case ActType::nooffer: return "nooffer";
    case ActType::bye: return "bye";
  }
  return "?";
}

std::string Domain::slot_name(int slot) const {
  if (slot >= 0 && slot < num_informable()) return informable[static_cast<std::size_t>(slot)];
  if (is_requestable(slot)) return requestable[static_cast<std::size_t>(slot - num_informable())];
  return "none";
}

WorldSchema::WorldSchema(std::vector<Domain> domains) : domains_(std::move(domains)) {
  if (domains_.empty()) throw ConfigError("world has no domains");
  for (const auto& d : domains_) {
    if (d.informable.empty()) throw ConfigError("domain '" + d.name + "' has no informable slots");
    if (d.values.size() != d.informable.size()) {
      throw ConfigError("domain '" + d.name + "': value sets do not match informable slots");
    }
    for (const auto& vs : d.values) {
      if (vs.empty()) throw ConfigError("domain '" + d.name + "' has an informable slot without values");
    }
    for (const auto& e : d.entities) {
      if (e.size() != d.informable.size()) {
        throw ConfigError("domain '" + d.name + "': entity does not assign every informable slot");
      }
      for (std::size_t s = 0; s < e.size(); ++s) {
        if (e[s] < 0 || e[s] >= static_cast<int>(d.values[s].size())) {
          throw ConfigError("domain '" + d.name + "': entity value out of range");
        }
      }
    }
  }
  build_layout();
}

void WorldSchema::build_layout() {
  actions_.clear();
  action_base_.clear();
  for (int d = 0; d < num_domains(); ++d) {
    const Domain& dom = domain(d);
    action_base_.push_back(static_cast<int>(actions_.size()));
    for (int s = 0; s < dom.num_slots(); ++s) actions_.push_back({d, ActType::inform, s});
    for (int s = 0; s < dom.num_informable(); ++s) actions_.push_back({d, ActType::request, s});
    actions_.push_back({d, ActType::offer, kNoSlot});
    actions_.push_back({d, ActType::book, kNoSlot});
    actions_.push_back({d, ActType::nooffer, kNoSlot});
  }
  bye_index_ = static_cast<int>(actions_.size());
  actions_.push_back({kGeneralDomain, ActType::bye, kNoSlot});

  int pos = 0;
  slot_flag_base_.clear();
  db_base_.clear();
  user_act_base_.clear();
  booking_base_.clear();
  active_base_.clear();
  for (const auto& d : domains_) {
    slot_flag_base_.push_back(pos);
    pos += 3 * d.num_slots();
  }
  for (std::size_t d = 0; d < domains_.size(); ++d) {
    db_base_.push_back(pos);
    pos += 4;
  }
  for (const auto& d : domains_) {
    user_act_base_.push_back(pos);
    pos += d.num_slots() + 1;
  }
  user_bye_offset_ = pos++;
  for (std::size_t d = 0; d < domains_.size(); ++d) {
    booking_base_.push_back(pos);
    pos += 3;
  }
  for (std::size_t d = 0; d < domains_.size(); ++d) active_base_.push_back(pos++);
  turn_offset_ = pos;
  pos += kTurnBuckets;
  state_dim_ = pos;
}

int WorldSchema::action_index(int d, ActType act, int slot) const {
  if (act == ActType::bye) return bye_index_;
  if (d < 0 || d >= num_domains()) throw UsageError("domain index out of range");
  const Domain& dom = domain(d);
  const int base = action_base_[static_cast<std::size_t>(d)];
  switch (act) {
    case ActType::inform:
      if (slot < 0 || slot >= dom.num_slots()) throw UsageError("inform slot out of range");
      return base + slot;
    case ActType::request:
      if (slot < 0 || slot >= dom.num_informable()) throw UsageError("request slot must be informable");
      return base + dom.num_slots() + slot;
    case ActType::offer: return base + dom.num_slots() + dom.num_informable();
    case ActType::book: return base + dom.num_slots() + dom.num_informable() + 1;
    case ActType::nooffer: return base + dom.num_slots() + dom.num_informable() + 2;
    case ActType::bye: break;
  }
  return bye_index_;
}

int WorldSchema::action_index(const AtomicAction& a) const { return action_index(a.domain, a.act, a.slot); }

std::string WorldSchema::action_name(int index) const {
  const AtomicAction& a = action(index);
  const std::string dom = a.domain == kGeneralDomain ? "general" : domain(a.domain).name;
  std::string name = dom + "-" + to_string(a.act);
  if (a.slot != kNoSlot) name += "-" + domain(a.domain).slot_name(a.slot);
  return name;
}

int WorldSchema::slot_flag_offset(int d, int slot) const {
  return slot_flag_base_.at(static_cast<std::size_t>(d)) + 3 * slot;
}
int WorldSchema::db_bucket_offset(int d) const { return db_base_.at(static_cast<std::size_t>(d)); }
int WorldSchema::user_act_offset(int d) const { return user_act_base_.at(static_cast<std::size_t>(d)); }
int WorldSchema::booking_offset(int d) const { return booking_base_.at(static_cast<std::size_t>(d)); }
int WorldSchema::active_offset(int d) const { return active_base_.at(static_cast<std::size_t>(d)); }

namespace {

struct DomainTemplate {
  const char* name;
  std::vector<std::pair<const char*, std::vector<const char*>>> informable;
  std::vector<const char*> requestable;
};

const std::vector<DomainTemplate>& templates() {
  static const std::vector<DomainTemplate> t{
      {"hotel",
       {{"area", {"north", "south", "centre", "east", "west"}},
        {"price", {"cheap", "moderate", "expensive"}},
        {"stars", {"2", "3", "4", "5"}},
        {"parking", {"yes", "no"}}},
       {"address", "phone", "postcode", "ref"}},
      {"restaurant",
       {{"area", {"north", "south", "centre", "east", "west"}},
        {"price", {"cheap", "moderate", "expensive"}},
        {"food", {"italian", "indian", "chinese", "british", "thai"}},
        {"size", {"small", "medium", "large"}}},
       {"address", "phone", "postcode", "ref"}},
      {"attraction",
       {{"area", {"north", "south", "centre", "east", "west"}},
        {"type", {"museum", "park", "theatre", "college", "gallery"}},
        {"fee", {"free", "paid", "donation"}},
        {"access", {"step-free", "stairs"}}},
       {"address", "phone", "postcode", "hours"}},
  };
  return t;
}

}  // namespace

WorldSchema WorldSchema::generate(const WorldSizes& sizes, std::uint64_t seed) {
  if (sizes.domains <= 0 || sizes.informable <= 0 || sizes.requestable <= 0 || sizes.values <= 0 ||
      sizes.entities <= 0) {
    throw ConfigError("world sizes must be positive");
  }
  Rng rng(seed);
  std::vector<Domain> domains;
  for (int d = 0; d < sizes.domains; ++d) {
    const DomainTemplate* tpl =
        d < static_cast<int>(templates().size()) ? &templates()[static_cast<std::size_t>(d)] : nullptr;
    Domain dom;
    dom.name = tpl ? tpl->name : "domain" + std::to_string(d);
    for (int s = 0; s < sizes.informable; ++s) {
      const bool named = tpl && s < static_cast<int>(tpl->informable.size());
      dom.informable.push_back(named ? tpl->informable[static_cast<std::size_t>(s)].first
                                     : "slot" + std::to_string(s));
      std::vector<std::string> values;
      for (int v = 0; v < sizes.values; ++v) {
        const bool vnamed = named && v < static_cast<int>(tpl->informable[static_cast<std::size_t>(s)].second.size());
        values.push_back(vnamed ? tpl->informable[static_cast<std::size_t>(s)].second[static_cast<std::size_t>(v)]
                                : "v" + std::to_string(v));
      }
      dom.values.push_back(std::move(values));
    }
    for (int r = 0; r < sizes.requestable; ++r) {
      const bool named = tpl && r < static_cast<int>(tpl->requestable.size());
      dom.requestable.push_back(named ? tpl->requestable[static_cast<std::size_t>(r)]
                                      : "info" + std::to_string(r));
    }
    // Distinct value combinations.
    double combos = 1.0;
    for (int s = 0; s < sizes.informable; ++s) combos *= sizes.values;
    const int n_entities = static_cast<int>(std::min<double>(sizes.entities, combos));
    std::set<std::vector<int>> seen;
    while (static_cast<int>(dom.entities.size()) < n_entities) {
      std::vector<int> e(static_cast<std::size_t>(sizes.informable));
      for (int& v : e) v = uniform_index(rng, sizes.values);
      if (seen.insert(e).second) dom.entities.push_back(std::move(e));
    }
    domains.push_back(std::move(dom));
  }
  return WorldSchema(std::move(domains));
}

WorldSchema WorldSchema::default_world() {
  static const WorldSchema w = generate(WorldSizes{}, 20230712);
  return w;
}

const DomainGoal* UserGoal::find(int domain) const {
  for (const auto& g : domains) {
    if (g.domain == domain) return &g;
  }
  return nullptr;
}

int UserGoal::total_requests() const {
  int n = 0;
  for (const auto& g : domains) n += static_cast<int>(g.requests.size());
  return n;
}

namespace {

// Random k-subset of [0, n) in random order.
std::vector<int> sample_subset(int n, int k, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + uniform_index(rng, n - i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

UserGoal sample_goal(const WorldSchema& schema, Rng& rng) {
  for (const auto& d : schema.domains()) {
    if (d.entities.empty()) throw ConfigError("domain '" + d.name + "' has an empty database");
    if (d.requestable.empty()) throw ConfigError("domain '" + d.name + "' has no requestable slots");
  }
  const int max_domains = std::min(schema.num_domains(), 3);
  double total = 0.0;
  for (int k = 0; k < max_domains; ++k) total += kGoalDomainWeights[k];
  double u = uniform01(rng) * total;
  int n_domains = 1;
  for (int k = 0; k < max_domains; ++k) {
    if (u < kGoalDomainWeights[k] || k + 1 == max_domains) {
      n_domains = k + 1;
      break;
    }
    u -= kGoalDomainWeights[k];
  }

  UserGoal goal;
  for (int d : sample_subset(schema.num_domains(), n_domains, rng)) {
    const Domain& dom = schema.domain(d);
    DomainGoal g;
    g.domain = d;
    const auto& entity = dom.entities[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(dom.entities.size())))];
    const int n_constraints = 1 + uniform_index(rng, dom.num_informable());
    for (int s : sample_subset(dom.num_informable(), n_constraints, rng)) {
      g.constraints.emplace_back(s, entity[static_cast<std::size_t>(s)]);
    }
    const int n_requests = 1 + uniform_index(rng, dom.num_requestable());
    for (int r : sample_subset(dom.num_requestable(), n_requests, rng)) {
      g.requests.push_back(dom.num_informable() + r);
    }
    std::sort(g.requests.begin(), g.requests.end());
    g.booking_required = uniform01(rng) < 0.5;
    goal.domains.push_back(std::move(g));
  }

  // Satisfiable by construction; checked anyway.
  for (const auto& g : goal.domains) {
    std::vector<int> c(static_cast<std::size_t>(schema.domain(g.domain).num_informable()), kUnexpressed);
    for (auto [s, v] : g.constraints) c[static_cast<std::size_t>(s)] = v;
    if (matching_entities(schema, g.domain, c).empty()) throw ConfigError("sampled an unsatisfiable goal");
  }
  return goal;
}

std::vector<UserGoal> enumerate_goals(const WorldSchema& schema, int domain) {
  const Domain& dom = schema.domain(domain);
  const int ni = dom.num_informable();
  const int nr = dom.num_requestable();
  std::vector<UserGoal> out;
  std::set<std::pair<std::vector<std::pair<int, int>>, std::pair<std::vector<int>, bool>>> seen;
  for (const auto& entity : dom.entities) {
    for (int cmask = 1; cmask < (1 << ni); ++cmask) {
      std::vector<int> slots;
      for (int s = 0; s < ni; ++s) {
        if (cmask & (1 << s)) slots.push_back(s);
      }
      // Every choice of the volunteered (first) constraint.
      for (std::size_t first = 0; first < slots.size(); ++first) {
        std::vector<std::pair<int, int>> constraints;
        for (std::size_t k = 0; k < slots.size(); ++k) {
          const int s = slots[(first + k) % slots.size()];
          constraints.emplace_back(s, entity[static_cast<std::size_t>(s)]);
        }
        for (int rmask = 1; rmask < (1 << nr); ++rmask) {
          std::vector<int> requests;
          for (int r = 0; r < nr; ++r) {
            if (rmask & (1 << r)) requests.push_back(ni + r);
          }
          for (bool book : {false, true}) {
            if (!seen.insert({constraints, {requests, book}}).second) continue;
            UserGoal goal;
            goal.domains.push_back({domain, constraints, requests, book});
            out.push_back(std::move(goal));
          }
        }
      }
    }
  }
  return out;
}

std::string to_string(const UserAct& act, const WorldSchema& schema) {
  switch (act.kind) {
    case UserAct::Kind::bye: return "user-bye";
    case UserAct::Kind::book: return schema.domain(act.domain).name + "-book";
    case UserAct::Kind::request:
      return schema.domain(act.domain).name + "-request-" + schema.domain(act.domain).slot_name(act.slot);
    case UserAct::Kind::inform: {
      const Domain& d = schema.domain(act.domain);
      std::string v = act.value == kDontCare ? "dontcare"
                                             : d.values[static_cast<std::size_t>(act.slot)][static_cast<std::size_t>(act.value)];
      return d.name + "-inform-" + d.slot_name(act.slot) + "=" + v;
    }
  }
  return "?";
}

DialogContext DialogContext::start(const WorldSchema& schema) {
  DialogContext ctx;
  for (const auto& d : schema.domains()) {
    DomainTrack t;
    t.constraint.assign(static_cast<std::size_t>(d.num_informable()), kUnexpressed);
    t.request_pending.assign(static_cast<std::size_t>(d.num_slots()), false);
    t.informed.assign(static_cast<std::size_t>(d.num_slots()), false);
    ctx.domains.push_back(std::move(t));
  }
  return ctx;
}

std::vector<int> matching_entities(const WorldSchema& schema, int domain, std::span<const int> constraints) {
  const Domain& d = schema.domain(domain);
  std::vector<int> out;
  for (std::size_t e = 0; e < d.entities.size(); ++e) {
    bool ok = true;
    for (std::size_t s = 0; s < constraints.size() && ok; ++s) {
      if (constraints[s] >= 0 && d.entities[e][s] != constraints[s]) ok = false;
    }
    if (ok) out.push_back(static_cast<int>(e));
  }
  return out;
}

int match_count(const WorldSchema& schema, const DialogContext& ctx, int domain) {
  return static_cast<int>(
      matching_entities(schema, domain, ctx.domains[static_cast<std::size_t>(domain)].constraint).size());
}

std::optional<int> resolved_entity(const WorldSchema& schema, std::span<const int> constraints, int domain) {
  const auto m = matching_entities(schema, domain, constraints);
  if (m.empty()) return std::nullopt;
  return m.front();
}

void apply_user_acts(const WorldSchema& schema, DialogContext& ctx, const std::vector<UserAct>& acts) {
  ctx.last_user_acts = acts;
  for (const auto& a : acts) {
    if (a.kind == UserAct::Kind::bye) continue;
    if (a.domain < 0 || a.domain >= schema.num_domains()) throw UsageError("user act domain out of range");
    DomainTrack& t = ctx.domains[static_cast<std::size_t>(a.domain)];
    t.active = true;
    switch (a.kind) {
      case UserAct::Kind::inform: t.constraint[static_cast<std::size_t>(a.slot)] = a.value; break;
      case UserAct::Kind::request: t.request_pending[static_cast<std::size_t>(a.slot)] = true; break;
      case UserAct::Kind::book: t.booking_requested = true; break;
      case UserAct::Kind::bye: break;
    }
  }
}

void apply_agent_actions(const WorldSchema& schema, DialogContext& ctx, const ActionSet& actions) {
  for (int idx : actions) {
    const AtomicAction& a = schema.action(idx);
    if (a.domain == kGeneralDomain) continue;
    DomainTrack& t = ctx.domains[static_cast<std::size_t>(a.domain)];
    switch (a.act) {
      case ActType::inform:
        t.informed[static_cast<std::size_t>(a.slot)] = true;
        t.request_pending[static_cast<std::size_t>(a.slot)] = false;
        break;
      case ActType::offer:
        if (match_count(schema, ctx, a.domain) > 0) t.offered = true;
        break;
      case ActType::book:
        if (match_count(schema, ctx, a.domain) > 0) t.booked = true;
        break;
      default: break;
    }
  }
  ++ctx.turn;
}

namespace {

int db_bucket(int matches) {
  if (matches <= 0) return 0;
  if (matches == 1) return 1;
  if (matches <= 3) return 2;
  return 3;
}

int turn_bucket(int turn) {
  if (turn <= 0) return 0;
  if (turn <= 2) return 1;
  if (turn <= 5) return 2;
  if (turn <= 9) return 3;
  return 4;
}

}  // namespace

std::vector<double> encode_state(const WorldSchema& schema, const DialogContext& ctx) {
  std::vector<double> s(static_cast<std::size_t>(schema.state_dim()), 0.0);
  auto set = [&s](int i) { s[static_cast<std::size_t>(i)] = 1.0; };
  for (int d = 0; d < schema.num_domains(); ++d) {
    const Domain& dom = schema.domain(d);
    const DomainTrack& t = ctx.domains[static_cast<std::size_t>(d)];
    for (int slot = 0; slot < dom.num_slots(); ++slot) {
      const int base = schema.slot_flag_offset(d, slot);
      if (slot < dom.num_informable() && t.constraint[static_cast<std::size_t>(slot)] != kUnexpressed) set(base);
      if (t.request_pending[static_cast<std::size_t>(slot)]) set(base + 1);
      if (t.informed[static_cast<std::size_t>(slot)]) set(base + 2);
    }
    if (t.active) {
      set(schema.db_bucket_offset(d) + db_bucket(match_count(schema, ctx, d)));
      set(schema.active_offset(d));
    }
    const int b = schema.booking_offset(d);
    if (t.booking_requested) set(b);
    if (t.offered) set(b + 1);
    if (t.booked) set(b + 2);
  }
  for (const auto& a : ctx.last_user_acts) {
    switch (a.kind) {
      case UserAct::Kind::bye: set(schema.user_bye_offset()); break;
      case UserAct::Kind::inform:
      case UserAct::Kind::request: set(schema.user_act_offset(a.domain) + a.slot); break;
      case UserAct::Kind::book: set(schema.user_act_offset(a.domain) + schema.domain(a.domain).num_slots()); break;
    }
  }
  set(schema.turn_bucket_offset() + turn_bucket(ctx.turn));
  return s;
}

ActionSet expert_respond(const WorldSchema& schema, const DialogContext& ctx) {
  for (const auto& a : ctx.last_user_acts) {
    if (a.kind == UserAct::Kind::bye) return {schema.action_index(kGeneralDomain, ActType::bye)};
  }
  std::vector<int> out;
  for (int d = 0; d < schema.num_domains(); ++d) {
    const DomainTrack& t = ctx.domains[static_cast<std::size_t>(d)];
    if (!t.active) continue;
    const Domain& dom = schema.domain(d);
    const int m = match_count(schema, ctx, d);
    if (m == 0) {
      out.push_back(schema.action_index(d, ActType::nooffer));
      continue;
    }
    if (m > 1) {
      const auto it = std::find(t.constraint.begin(), t.constraint.end(), kUnexpressed);
      if (it != t.constraint.end()) {
        out.push_back(schema.action_index(d, ActType::request, static_cast<int>(it - t.constraint.begin())));
        continue;
      }
    }
    bool pending = false;
    for (int s = dom.num_informable(); s < dom.num_slots(); ++s) {
      if (t.request_pending[static_cast<std::size_t>(s)]) {
        out.push_back(schema.action_index(d, ActType::inform, s));
        pending = true;
      }
    }
    if (t.booking_requested && !t.booked) {
      out.push_back(schema.action_index(d, ActType::book));
      if (!t.offered) out.push_back(schema.action_index(d, ActType::offer));
    } else if (!pending && !t.offered) {
      out.push_back(schema.action_index(d, ActType::offer));
    }
  }
  return make_action_set(std::move(out));
}

UserSimulator::UserSimulator(const WorldSchema& schema, UserGoal goal) : schema_(&schema), goal_(std::move(goal)) {
  for (const auto& g : goal_.domains) {
    const Domain& dom = schema.domain(g.domain);
    DomainProgress p;
    p.expressed.assign(static_cast<std::size_t>(dom.num_informable()), kUnexpressed);
    p.answered.assign(static_cast<std::size_t>(dom.num_slots()), false);
    progress_.emplace_back(g.domain, std::move(p));
    if (!g.constraints.empty()) {
      agenda_.push_back({UserAct::Kind::inform, g.domain, g.constraints.front().first, g.constraints.front().second});
    }
    for (int r : g.requests) agenda_.push_back({UserAct::Kind::request, g.domain, r, kUnexpressed});
    if (g.booking_required) agenda_.push_back({UserAct::Kind::book, g.domain, kNoSlot, kUnexpressed});
  }
}

UserSimulator::DomainProgress& UserSimulator::progress(int domain) {
  for (auto& [d, p] : progress_) {
    if (d == domain) return p;
  }
  throw UsageError("domain not in the user goal");
}

const UserSimulator::DomainProgress* UserSimulator::progress_if(int domain) const {
  for (const auto& [d, p] : progress_) {
    if (d == domain) return &p;
  }
  return nullptr;
}

bool UserSimulator::request_open(int domain, int slot) const {
  const DomainGoal* g = goal_.find(domain);
  if (!g || std::find(g->requests.begin(), g->requests.end(), slot) == g->requests.end()) return false;
  return !progress_if(domain)->answered[static_cast<std::size_t>(slot)];
}

std::optional<int> UserSimulator::booked_entity(int domain) const {
  const DomainProgress* p = progress_if(domain);
  return p ? p->booked : std::nullopt;
}

bool UserSimulator::item_done(const UserAct& act) const {
  const DomainProgress* p = progress_if(act.domain);
  switch (act.kind) {
    case UserAct::Kind::inform: return p->expressed[static_cast<std::size_t>(act.slot)] != kUnexpressed;
    case UserAct::Kind::request: return p->answered[static_cast<std::size_t>(act.slot)];
    case UserAct::Kind::book: return p->booked.has_value();
    case UserAct::Kind::bye: return false;
  }
  return false;
}

bool UserSimulator::goal_complete() const {
  for (const auto& g : goal_.domains) {
    const DomainProgress* p = progress_if(g.domain);
    for (int r : g.requests) {
      if (!p->answered[static_cast<std::size_t>(r)]) return false;
    }
    if (g.booking_required && !p->booked) return false;
  }
  return true;
}

std::vector<UserAct> UserSimulator::start() {
  std::vector<UserAct> acts;
  while (agenda_pos_ < agenda_.size() && static_cast<int>(acts.size()) < kMaxAgendaItemsPerTurn) {
    const UserAct& item = agenda_[agenda_pos_++];
    if (!item_done(item)) acts.push_back(item);
  }
  for (const auto& a : acts) {
    if (a.kind == UserAct::Kind::inform) progress(a.domain).expressed[static_cast<std::size_t>(a.slot)] = a.value;
  }
  issued_.insert(issued_.end(), acts.begin(), acts.end());
  return acts;
}

UserSimulator::Step UserSimulator::step(const ActionSet& agent_actions) {
  std::vector<UserAct> answers;
  for (int idx : agent_actions) {
    const AtomicAction& a = schema_->action(idx);
    if (a.act == ActType::bye) return {{}, true};
    const DomainGoal* g = goal_.find(a.domain);
    if (!g) continue;
    DomainProgress& p = progress(a.domain);
    switch (a.act) {
      case ActType::inform:
        if (request_open(a.domain, a.slot)) p.answered[static_cast<std::size_t>(a.slot)] = true;
        break;
      case ActType::request: {
        int value = kDontCare;
        for (auto [s, v] : g->constraints) {
          if (s == a.slot) value = v;
        }
        answers.push_back({UserAct::Kind::inform, a.domain, a.slot, value});
        break;
      }
      case ActType::book:
        if (g->booking_required && !p.booked) p.booked = resolved_entity(*schema_, p.expressed, a.domain);
        break;
      default: break;
    }
  }

  if (goal_complete()) return {{UserAct{UserAct::Kind::bye, kGeneralDomain, kNoSlot, kUnexpressed}}, true};

  std::vector<UserAct> acts;
  if (agent_actions.empty()) {
    // Retry: repeat the most recent act that is still unresolved.
    for (auto it = issued_.rbegin(); it != issued_.rend(); ++it) {
      if (it->kind != UserAct::Kind::inform && !item_done(*it)) {
        acts.push_back(*it);
        break;
      }
    }
    if (acts.empty() && !issued_.empty()) acts.push_back(issued_.back());
  } else {
    acts = answers;
    int added = 0;
    while (agenda_pos_ < agenda_.size() && added < kMaxAgendaItemsPerTurn) {
      const UserAct& item = agenda_[agenda_pos_++];
      if (item_done(item)) continue;
      acts.push_back(item);
      ++added;
    }
    if (acts.empty()) {
      // Agenda exhausted: re-issue outstanding requests and bookings.
      for (const auto& a : issued_) {
        if (added >= kMaxAgendaItemsPerTurn) break;
        if (a.kind == UserAct::Kind::inform || item_done(a)) continue;
        if (std::find(acts.begin(), acts.end(), a) != acts.end()) continue;
        acts.push_back(a);
        ++added;
      }
    }
  }
  for (const auto& a : acts) {
    if (a.kind == UserAct::Kind::inform) progress(a.domain).expressed[static_cast<std::size_t>(a.slot)] = a.value;
  }
  issued_.insert(issued_.end(), acts.begin(), acts.end());
  return {std::move(acts), false};
}

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Agent expert_agent(const WorldSchema& schema) {
  return [&schema](const DialogContext& ctx, std::span<const double>) { return expert_respond(schema, ctx); };
}

EpisodeMetrics run_episode(const Agent& agent, const WorldSchema& schema, const UserGoal& goal,
                           const EpisodeConfig& cfg, std::vector<TurnRecord>* trace) {
  DialogContext ctx = DialogContext::start(schema);
  UserSimulator user(schema, goal);
  std::vector<UserAct> user_acts = user.start();
  apply_user_acts(schema, ctx, user_acts);

  int informs = 0;
  int useful = 0;
  EpisodeMetrics m;
  while (m.turns < cfg.max_turns) {
    const std::vector<double> state = encode_state(schema, ctx);
    const ActionSet actions = agent(ctx, state);
    for (int idx : actions) {
      if (idx < 0 || idx >= schema.num_actions()) throw UsageError("agent produced an out-of-vocabulary action");
    }
    if (trace) trace->push_back({user_acts, state, actions});
    for (int idx : actions) {
      const AtomicAction& a = schema.action(idx);
      if (a.act != ActType::inform) continue;
      ++informs;
      if (user.request_open(a.domain, a.slot)) ++useful;
    }
    apply_agent_actions(schema, ctx, actions);
    ++m.turns;
    UserSimulator::Step step = user.step(actions);
    if (step.terminated) break;
    user_acts = std::move(step.acts);
    apply_user_acts(schema, ctx, user_acts);
  }

  const int total = goal.total_requests();
  int answered = 0;
  for (const auto& g : goal.domains) {
    for (int r : g.requests) {
      if (!user.request_open(g.domain, r)) ++answered;
    }
  }
  m.inform_recall = total > 0 ? static_cast<double>(answered) / total : 1.0;
  m.inform_precision = informs > 0 ? static_cast<double>(useful) / informs : 0.0;
  m.inform_f1 = f1_score(m.inform_precision, m.inform_recall);

  m.match = 1.0;
  for (const auto& g : goal.domains) {
    if (!g.booking_required) continue;
    const auto booked = user.booked_entity(g.domain);
    bool ok = booked.has_value();
    if (ok) {
      const auto& entity = schema.domain(g.domain).entities[static_cast<std::size_t>(*booked)];
      for (auto [s, v] : g.constraints) {
        if (entity[static_cast<std::size_t>(s)] != v) ok = false;
      }
    }
    if (!ok) m.match = 0.0;
  }
  m.success = (m.inform_recall == 1.0 && m.match == 1.0) ? 1.0 : 0.0;
  return m;
}

std::string trace_to_jsonl(const WorldSchema& schema, const std::vector<TurnRecord>& trace) {
  std::string out;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    nlohmann::ordered_json j;
    j["turn"] = t;
    auto user = nlohmann::json::array();
    for (const auto& a : trace[t].user_acts) user.push_back(to_string(a, schema));
    j["user"] = std::move(user);
    auto agent = nlohmann::json::array();
    for (int a : trace[t].agent_actions) agent.push_back(schema.action_name(a));
    j["agent"] = std::move(agent);
    auto active = nlohmann::json::array();
    for (std::size_t i = 0; i < trace[t].state.size(); ++i) {
      if (trace[t].state[i] != 0.0) active.push_back(i);
    }
    j["state_on"] = std::move(active);
    out += j.dump() + "\n";
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean_std of an empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

AggregateMetrics compute_aggregate(std::span<const EpisodeMetrics> episodes) {
  if (episodes.empty()) throw UsageError("compute_aggregate needs at least one episode");
  auto field = [&](auto getter) {
    std::vector<double> v;
    v.reserve(episodes.size());
    for (const auto& e : episodes) v.push_back(getter(e));
    return mean_std(v);
  };
  AggregateMetrics a;
  a.count = episodes.size();
  a.turns = field([](const EpisodeMetrics& e) { return static_cast<double>(e.turns); });
  a.match = field([](const EpisodeMetrics& e) { return e.match; });
  a.inform_recall = field([](const EpisodeMetrics& e) { return e.inform_recall; });
  a.inform_precision = field([](const EpisodeMetrics& e) { return e.inform_precision; });
  a.inform_f1 = field([](const EpisodeMetrics& e) { return e.inform_f1; });
  a.success_pct = field([](const EpisodeMetrics& e) { return 100.0 * e.success; });
  return a;
}

std::string format_mean_std(const MeanStd& v, int mean_digits, int std_digits) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.*f \xC2\xB1 %.*f", mean_digits, v.mean, std_digits, v.std);
  return buf;
}

}  // namespace bmatch::world
