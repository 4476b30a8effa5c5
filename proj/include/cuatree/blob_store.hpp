#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "cuatree/model.hpp"

namespace cuatree {

// Content-addressed observation store shared by all workers of a run.
// Nodes keep digests only; pixels live here once per distinct frame.
class BlobStore {
 public:
  using Handle = std::shared_ptr<const Observation>;

  Digest put(const Observation& observation) {
    std::lock_guard lock(mutex_);
    blobs_.try_emplace(observation.digest(), std::make_shared<const Observation>(observation));
    return observation.digest();
  }

  Handle get(Digest digest) const {
    std::lock_guard lock(mutex_);
    auto it = blobs_.find(digest);
    return it == blobs_.end() ? nullptr : it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return blobs_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<Digest, Handle> blobs_;
};

}  // namespace cuatree
