#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wavefuse/rng.hpp"

namespace wavefuse {

// One synchronized RGB frame / 1-second audio segment pair. The frame is the
// one at the midpoint of the segment.
struct SyncPair {
  int frame_index = 0;
  int segment_index = 0;
  std::string image_path;
  std::string wav_path;
  int image_id = 0;
  std::vector<std::string> tags;  // condition tags (background, weather, lighting)
};

// Frame at the midpoint of 1-second segment k: round((k + 0.5) * fps), ties
// rounding half up.
inline int midpoint_frame(int segment_index, double fps) {
  if (fps <= 0) throw ConfigError("midpoint_frame: fps must be positive");
  if (segment_index < 0) throw ConfigError("midpoint_frame: negative segment index");
  return static_cast<int>(std::floor((segment_index + 0.5) * fps + 0.5));
}

struct SplitSpec {
  enum class Kind { kInDistribution, kOutOfDistribution };
  Kind kind = Kind::kInDistribution;
  double train_ratio = 0.6;
  double val_ratio = 0.2;  // test gets the remainder
  std::vector<std::string> holdout_tags;  // OOD: any pair carrying one goes to test
  std::uint64_t seed = 0;
};

inline SplitSpec::Kind parse_split_kind(const std::string& s) {
  if (s == "in_distribution") return SplitSpec::Kind::kInDistribution;
  if (s == "out_of_distribution") return SplitSpec::Kind::kOutOfDistribution;
  throw ConfigError("unknown split kind: " + s);
}

struct SplitResult {
  std::vector<std::size_t> train, val, test;  // indices into the pair list
};

// In-distribution: stratified by the full tag combination, shuffled and cut
// by the ratios. Out-of-distribution: pairs carrying a holdout tag form the
// test set and are fully excluded from train/val. Deterministic given the
// spec seed.
inline SplitResult make_splits(const std::vector<SyncPair>& pairs, const SplitSpec& spec) {
  if (spec.train_ratio <= 0 || spec.val_ratio < 0 ||
      spec.train_ratio + spec.val_ratio >= 1.0)
    throw ConfigError("splits: ratios must satisfy 0 < train, 0 <= val, train+val < 1");
  for (const auto& p : pairs)
    if (p.tags.empty())
      throw ConfigError("splits: pair for segment " + std::to_string(p.segment_index) +
                        " carries no tags");

  SplitResult out;
  RngState rng(derive_seed(spec.seed, "splits"));

  if (spec.kind == SplitSpec::Kind::kOutOfDistribution) {
    if (spec.holdout_tags.empty())
      throw ConfigError("splits: out_of_distribution requires holdout_tags");
    const std::set<std::string> holdout(spec.holdout_tags.begin(), spec.holdout_tags.end());
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const bool held = std::any_of(pairs[i].tags.begin(), pairs[i].tags.end(),
                                    [&](const std::string& t) { return holdout.count(t); });
      if (held)
        out.test.push_back(i);
      else
        rest.push_back(i);
    }
    if (out.test.empty())
      throw ConfigError("splits: no pair carries any holdout tag; OOD split impossible");
    if (rest.empty())
      throw ConfigError("splits: every pair carries a holdout tag; nothing left to train on");
    rng.shuffle(rest);
    const double train_frac = spec.train_ratio / (spec.train_ratio + spec.val_ratio);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_frac * static_cast<double>(rest.size())));
    for (std::size_t i = 0; i < rest.size(); ++i)
      (i < n_train ? out.train : out.val).push_back(rest[i]);
  } else {
    // Group by the exact tag combination so every condition appears in every
    // split when counts allow.
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::string key;
      std::vector<std::string> sorted_tags = pairs[i].tags;
      std::sort(sorted_tags.begin(), sorted_tags.end());
      for (const auto& t : sorted_tags) key += t + "|";
      strata[key].push_back(i);
    }
    for (auto& [key, idx] : strata) {
      rng.shuffle(idx);
      const auto n = idx.size();
      const auto n_train =
          static_cast<std::size_t>(std::llround(spec.train_ratio * static_cast<double>(n)));
      const auto n_val =
          static_cast<std::size_t>(std::llround(spec.val_ratio * static_cast<double>(n)));
      for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
          out.train.push_back(idx[i]);
        else if (i < n_train + n_val)
          out.val.push_back(idx[i]);
        else
          out.test.push_back(idx[i]);
      }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
  }
  return out;
}

}  // namespace wavefuse
