#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace partforge {

enum class errc {
    invalid_argument,
    invalid_state,
    missing_file,
    malformed_header,
    truncated_payload,
    corrupt_file,
    version_mismatch,
    io_failure,
    empty_dataset,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::invalid_argument: return "invalid_argument";
        case errc::invalid_state: return "invalid_state";
        case errc::missing_file: return "missing_file";
        case errc::malformed_header: return "malformed_header";
        case errc::truncated_payload: return "truncated_payload";
        case errc::corrupt_file: return "corrupt_file";
        case errc::version_mismatch: return "version_mismatch";
        case errc::io_failure: return "io_failure";
        case errc::empty_dataset: return "empty_dataset";
    }
    return "unknown";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
    throw error(code, message);
}

inline void require(bool condition, errc code, const std::string& message) {
    if (!condition) raise(code, message);
}

// Deterministic RNG. All randomness in the library flows through this class so
// that identical seeds give identical results on every platform; the standard
// <random> distributions are implementation-defined and are not used.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        // splitmix64 expansion of the seed into the xoshiro256** state
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * 3.14159265358979323846 * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

    // Stable derivation of per-item seeds from a master seed.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
        x = splitmix64(x);
        return splitmix64(x);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4]{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Index-parallel map over [0, n). Results must be written to per-index slots by
// the caller, which keeps the outcome independent of the worker count. The
// first exception from any worker is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    const unsigned hw = std::thread::hardware_concurrency();
    int w = workers > 0 ? workers : static_cast<int>(hw > 0 ? hw : 1);
    w = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> counter{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&]() {
            std::size_t i;
            while (!failed.load(std::memory_order_relaxed) && (i = counter.fetch_add(1)) < n) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// All outputs are written through here: full temp file first, then rename.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), errc::io_failure, "cannot open for writing: " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        require(out.good(), errc::io_failure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, errc::io_failure, "rename failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::missing_file, "cannot open: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline double sq(double v) { return v * v; }

}  // namespace partforge
