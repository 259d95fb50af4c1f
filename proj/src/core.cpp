#include "connectome/core.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace connectome {

std::vector<int> Parcellation::region_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(n_regions), 0);
  for (int label : labels) {
    if (label >= 0 && label < n_regions) {
      ++sizes[static_cast<std::size_t>(label)];
    }
  }
  return sizes;
}

std::vector<int> Parcellation::region_voxels(int region) const {
  std::vector<int> out;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == region) {
      out.push_back(static_cast<int>(v));
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

bool fitted_on_train_only(std::span<const int> used, std::span<const int> train,
                          std::span<const int> test) {
  std::vector<int> tr(train.begin(), train.end());
  std::vector<int> te(test.begin(), test.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  for (int id : used) {
    if (!std::binary_search(tr.begin(), tr.end(), id) ||
        std::binary_search(te.begin(), te.end(), id)) {
      return false;
    }
  }
  return !used.empty();
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      }
    });
  }
  pool.clear();
  if (failure) {
    std::rethrow_exception(failure);
  }
}

} // namespace connectome
