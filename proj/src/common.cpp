#include "hgs/error.hpp"
#include "hgs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hgs {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::CulledBehindCamera: return "CulledBehindCamera";
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::QuadratureNonConvergence: return "QuadratureNonConvergence";
    case ErrorKind::EmptyScene: return "EmptyScene";
    case ErrorKind::ImageTooLarge: return "ImageTooLarge";
    case ErrorKind::MismatchedForward: return "MismatchedForward";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::MissingProperty: return "MissingProperty";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::UnsupportedCameraModel: return "UnsupportedCameraModel";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyPointCloud: return "EmptyPointCloud";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::UnsupportedBitDepth: return "UnsupportedBitDepth";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

int default_worker_count() {
    if (const char* env = std::getenv("HGS_NUM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    const auto count = static_cast<std::size_t>(std::max(1, workers));
    if (count == 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(std::min(count, n) - 1);
    for (std::size_t t = 1; t < std::min(count, n); ++t) pool.emplace_back(run);
    run();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace hgs
