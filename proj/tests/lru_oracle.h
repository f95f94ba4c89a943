/*
 * Copyright 2026 The timeprot Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Reference cache model for tests: each set is a recency list of line
// addresses, front = most recent. Shares no code with CacheState.

#ifndef TIMEPROT_TESTS_LRU_ORACLE_H_
#define TIMEPROT_TESTS_LRU_ORACLE_H_

#include <algorithm>
#include <cstdint>
#include <list>
#include <set>
#include <vector>

namespace timeprot::testing {

class LruOracle {
 public:
  LruOracle(std::uint64_t sets, std::uint64_t ways, std::uint64_t line)
      : sets_(sets), ways_(ways), line_(line), lists_(sets) {}

  struct Result {
    bool hit;
    bool evicted_dirty;
  };

  Result access(std::uint64_t addr, bool write) {
    const std::uint64_t tag = addr / line_;
    auto& lst = lists_[tag % sets_];
    const auto it = std::find(lst.begin(), lst.end(), tag);
    Result r{it != lst.end(), false};
    if (r.hit) {
      lst.erase(it);
    } else if (lst.size() == ways_) {
      const std::uint64_t victim = lst.back();
      lst.pop_back();
      r.evicted_dirty = dirty_.erase(victim) > 0;
    }
    lst.push_front(tag);
    if (write) dirty_.insert(tag);
    return r;
  }

  bool contains(std::uint64_t addr) const {
    const std::uint64_t tag = addr / line_;
    const auto& lst = lists_[tag % sets_];
    return std::find(lst.begin(), lst.end(), tag) != lst.end();
  }

  std::size_t dirty_count() const { return dirty_.size(); }

 private:
  std::uint64_t sets_, ways_, line_;
  std::vector<std::list<std::uint64_t>> lists_;
  std::set<std::uint64_t> dirty_;
};

}  // namespace timeprot::testing

#endif  // TIMEPROT_TESTS_LRU_ORACLE_H_
