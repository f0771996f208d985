#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

#include "dqos/common.hpp"

namespace dqos {

struct FlowKey {
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t proto = 0;

  constexpr auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t a = (static_cast<std::uint64_t>(k.src_addr) << 32) | k.dst_addr;
    std::uint64_t b = (static_cast<std::uint64_t>(k.src_port) << 24) | (static_cast<std::uint64_t>(k.dst_port) << 8) |
                      k.proto;
    return static_cast<std::size_t>(mix_seed(a, b));
  }
};

struct FlowRule {
  FlowKey key;
  NodeId action_next_hop;
  SimTime installed_at = 0;
  SimTime last_hit_at = 0;
};

struct FlowTableStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t installs = 0;
  std::uint64_t refreshes = 0;  // install of a key already present
  std::uint64_t evictions_idle = 0;
  std::uint64_t evictions_hard = 0;
  std::uint64_t rejects_full = 0;

  bool operator==(const FlowTableStats&) const = default;
};

enum class InstallResult { Installed, Refreshed, RejectedFull };

// Bounded exact-match rule store with OpenFlow idle/hard timeouts.
//
// Expiry is lazy: lookup() and install() first drop every rule whose age has
// reached a timeout (inclusive boundary), so callers never observe a stale
// rule. Timestamps passed in must be non-decreasing.
class FlowTable {
 public:
  FlowTable(std::size_t capacity, SimTime idle_timeout = kNever, SimTime hard_timeout = kNever)
      : capacity_(capacity), idle_timeout_(idle_timeout), hard_timeout_(hard_timeout) {
    rules_.reserve(capacity + 1);
  }

  std::optional<NodeId> lookup(const FlowKey& key, SimTime now) {
    evict_expired(now);
    auto it = rules_.find(key);
    if (it == rules_.end()) {
      ++stats_.misses;
      return std::nullopt;
    }
    auto& e = it->second;
    e.rule.last_hit_at = now;
    idle_order_.splice(idle_order_.end(), idle_order_, e.idle_pos);
    ++stats_.hits;
    return e.rule.action_next_hop;
  }

  InstallResult install(const FlowKey& key, NodeId next_hop, SimTime now) {
    evict_expired(now);
    if (auto it = rules_.find(key); it != rules_.end()) {
      auto& e = it->second;
      e.rule.action_next_hop = next_hop;
      e.rule.installed_at = now;
      e.rule.last_hit_at = now;
      idle_order_.splice(idle_order_.end(), idle_order_, e.idle_pos);
      hard_order_.splice(hard_order_.end(), hard_order_, e.hard_pos);
      ++stats_.refreshes;
      return InstallResult::Refreshed;
    }
    if (rules_.size() >= capacity_) {
      ++stats_.rejects_full;
      return InstallResult::RejectedFull;
    }
    idle_order_.push_back(key);
    hard_order_.push_back(key);
    Entry e{FlowRule{key, next_hop, now, now}, std::prev(idle_order_.end()), std::prev(hard_order_.end())};
    rules_.emplace(key, e);
    ++stats_.installs;
    return InstallResult::Installed;
  }

  InstallResult install(const FlowRule& rule, SimTime now) { return install(rule.key, rule.action_next_hop, now); }

  std::size_t evict_expired(SimTime now) {
    std::size_t evicted = 0;
    if (idle_timeout_ != kNever) {
      while (!idle_order_.empty()) {
        auto it = rules_.find(idle_order_.front());
        if (now - it->second.rule.last_hit_at < idle_timeout_) break;
        erase(it);
        ++stats_.evictions_idle;
        ++evicted;
      }
    }
    if (hard_timeout_ != kNever) {
      while (!hard_order_.empty()) {
        auto it = rules_.find(hard_order_.front());
        if (now - it->second.rule.installed_at < hard_timeout_) break;
        erase(it);
        ++stats_.evictions_hard;
        ++evicted;
      }
    }
    return evicted;
  }

  const FlowRule* find(const FlowKey& key) const {
    auto it = rules_.find(key);
    return it == rules_.end() ? nullptr : &it->second.rule;
  }

  bool contains(const FlowKey& key) const { return rules_.count(key) != 0; }
  std::size_t size() const { return rules_.size(); }
  std::size_t capacity() const { return capacity_; }
  SimTime idle_timeout() const { return idle_timeout_; }
  SimTime hard_timeout() const { return hard_timeout_; }
  const FlowTableStats& stats() const { return stats_; }

  // Rules ordered by key; used by tests comparing against reference models.
  std::vector<FlowRule> rules() const {
    std::vector<FlowRule> out;
    out.reserve(rules_.size());
    for (const auto& [k, e] : rules_) out.push_back(e.rule);
    std::sort(out.begin(), out.end(), [](const FlowRule& a, const FlowRule& b) { return a.key < b.key; });
    return out;
  }

 private:
  struct Entry {
    FlowRule rule;
    std::list<FlowKey>::iterator idle_pos;  // position in last-hit order
    std::list<FlowKey>::iterator hard_pos;  // position in install order
  };
  using Map = std::unordered_map<FlowKey, Entry, FlowKeyHash>;

  void erase(Map::iterator it) {
    idle_order_.erase(it->second.idle_pos);
    hard_order_.erase(it->second.hard_pos);
    rules_.erase(it);
  }

  std::size_t capacity_;
  SimTime idle_timeout_;
  SimTime hard_timeout_;
  Map rules_;
  std::list<FlowKey> idle_order_;
  std::list<FlowKey> hard_order_;
  FlowTableStats stats_;
};

}  // namespace dqos
