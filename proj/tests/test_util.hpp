#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

// Shared scratch-space helpers for the test suites.

namespace testutil {

inline bool exact_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

inline std::filesystem::path temp_dir() {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("memrobust_test_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_text(const std::filesystem::path& dir,
                                        const std::string& name, const std::string& content) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

} // namespace testutil
