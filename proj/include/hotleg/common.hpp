#pragma once

// Shared plumbing: error types, seeded RNG with portable draws, a small
// thread pool with shape-only work partitioning (results never depend on
// thread count), SHA-256 helpers, and little-endian float32 blob I/O.

#include <Eigen/Dense>
#include <openssl/evp.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hotleg {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct corruption_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Random numbers
//
// mt19937_64 supplies the bits; uniform/bounded draws are implemented here
// instead of <random> distributions so that streams are identical across
// standard library implementations.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  /// Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t zone = (UINT64_MAX / n) * n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= zone);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// Independent child stream, stable under reordering of other draws.
  Rng derive(std::uint64_t stream) const {
    return Rng(splitmix64(base_seed_mix_ ^ splitmix64(stream)));
  }

  static Rng with_base(std::uint64_t seed) {
    Rng r(seed);
    r.base_seed_mix_ = splitmix64(seed);
    return r;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t base_seed_mix_ = 0;
};

/// Deterministic per-purpose sub-seed from a run seed and a label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x517cc1b727220a95ull));
}

// ---------------------------------------------------------------------------
// Thread pool + deterministic matmul
//
// Work is split into fixed-size row (or column) chunks decided only by the
// operand shapes, so results are bitwise identical for any worker count.

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int workers() const { return static_cast<int>(threads_.size()) + 1; }

  void run(int n_tasks, const std::function<void(int)>& fn) {
    if (n_tasks <= 0) return;
    if (n_tasks == 1 || threads_.empty()) {
      for (int i = 0; i < n_tasks; ++i) fn(i);
      return;
    }
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->count = n_tasks;
    job->remaining.store(n_tasks, std::memory_order_relaxed);
    {
      std::scoped_lock lock(mutex_);
      current_ = job;
      ++generation_;
    }
    cv_.notify_all();
    execute(*job);  // caller participates
    std::unique_lock lock(mutex_);
    done_cv_.wait(lock, [&] {
      return job->remaining.load(std::memory_order_acquire) == 0;
    });
  }

  ~ThreadPool() {
    {
      std::scoped_lock lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

 private:
  struct Job {
    const std::function<void(int)>* fn = nullptr;
    std::atomic<int> next{0};
    int count = 0;
    std::atomic<int> remaining{0};
  };

  ThreadPool() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HOTLEG_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) n = v;
    }
    for (int i = 1; i < n; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void execute(Job& job) {
    while (true) {
      const int t = job.next.fetch_add(1, std::memory_order_relaxed);
      if (t >= job.count) return;
      (*job.fn)(t);
      if (job.remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::scoped_lock lock(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    while (true) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = current_;
      }
      if (job) execute(*job);
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::shared_ptr<Job> current_;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

namespace detail {
constexpr Eigen::Index kChunkRows = 128;
}

/// C = A * B. Partitioned by fixed-size chunks of the larger output
/// dimension; the partition depends only on shapes, never on thread count.
inline void matmul(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols() != B.rows()) {
    throw shape_error("matmul: inner dimensions disagree (" +
                      std::to_string(A.cols()) + " vs " + std::to_string(B.rows()) + ")");
  }
  C.resize(A.rows(), B.cols());
  const Eigen::Index rows = C.rows(), cols = C.cols();
  const Eigen::Index chunk = detail::kChunkRows;
  if (rows >= cols) {
    const int n_tasks = static_cast<int>((rows + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A * B;
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, rows - r0);
      C.middleRows(r0, len).noalias() = A.middleRows(r0, len) * B;
    });
  } else {
    const int n_tasks = static_cast<int>((cols + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A * B;
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, cols - c0);
      C.middleCols(c0, len).noalias() = A * B.middleCols(c0, len);
    });
  }
}

/// C = A^T * B without materializing the transpose.
inline void matmul_at_b(const Mat& A, const Mat& B, Mat& C) {
  if (A.rows() != B.rows()) {
    throw shape_error("matmul_at_b: row counts disagree");
  }
  C.resize(A.cols(), B.cols());
  const Eigen::Index rows = C.rows(), cols = C.cols();
  const Eigen::Index chunk = detail::kChunkRows;
  if (rows >= cols) {
    const int n_tasks = static_cast<int>((rows + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A.transpose() * B;
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, rows - r0);
      C.middleRows(r0, len).noalias() = A.middleCols(r0, len).transpose() * B;
    });
  } else {
    const int n_tasks = static_cast<int>((cols + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A.transpose() * B;
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, cols - c0);
      C.middleCols(c0, len).noalias() = A.transpose() * B.middleCols(c0, len);
    });
  }
}

/// C = A * B^T.
inline void matmul_a_bt(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols() != B.cols()) {
    throw shape_error("matmul_a_bt: column counts disagree");
  }
  C.resize(A.rows(), B.rows());
  const Eigen::Index rows = C.rows(), cols = C.cols();
  const Eigen::Index chunk = detail::kChunkRows;
  if (rows >= cols) {
    const int n_tasks = static_cast<int>((rows + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A * B.transpose();
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, rows - r0);
      C.middleRows(r0, len).noalias() = A.middleRows(r0, len) * B.transpose();
    });
  } else {
    const int n_tasks = static_cast<int>((cols + chunk - 1) / chunk);
    if (n_tasks <= 1) {
      C.noalias() = A * B.transpose();
      return;
    }
    ThreadPool::instance().run(n_tasks, [&](int t) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(t) * chunk;
      const Eigen::Index len = std::min(chunk, cols - c0);
      C.middleCols(c0, len).noalias() = A * B.middleRows(c0, len).transpose();
    });
  }
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string to_hex(const unsigned char* data, std::size_t len) {
  static const char* digits = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (std::size_t i = 0; i < len; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xf];
  }
  return out;
}

inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) != 1) {
    throw io_error("sha256: digest failed");
  }
  return to_hex(md, md_len);
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("sha256: cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_DigestFinal_ex(ctx, md, &md_len);
  EVP_MD_CTX_free(ctx);
  return to_hex(md, md_len);
}

// ---------------------------------------------------------------------------
// Little-endian float32 blobs

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

inline void write_f32le(const std::filesystem::path& path, const double* data,
                        std::size_t count) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for write: " + tmp.string());
    std::vector<float> buf(1 << 16);
    std::size_t written = 0;
    while (written < count) {
      const std::size_t n = std::min(buf.size(), count - written);
      for (std::size_t i = 0; i < n; ++i) {
        buf[i] = static_cast<float>(data[written + i]);
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
      written += n;
    }
    if (!out) throw io_error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<double> read_f32le(const std::filesystem::path& path,
                                      std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * sizeof(float)) {
    throw corruption_error(path.string() + ": expected " +
                           std::to_string(expected_count * sizeof(float)) +
                           " bytes, found " + std::to_string(bytes));
  }
  in.seekg(0);
  std::vector<float> raw(expected_count);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw corruption_error("short read: " + path.string());
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = raw[i];
  return out;
}

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for write: " + tmp.string());
    out << text;
    if (!out) throw io_error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

// ---------------------------------------------------------------------------
// Misc

inline double wall_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) return line.substr(pos + 2);
    }
  }
  return "unknown";
}

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hotleg
