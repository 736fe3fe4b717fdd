#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnf/image.hpp"
#include "dnf/tensor.hpp"

namespace testutil {

// Self-deleting scratch directory; unique per instance.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::string tmpl = (base / "dnf_test_XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
        path_ = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline dnf::ImageU8 gray_image(int h, int w, std::uint8_t fill) {
    dnf::ImageU8 img;
    img.height = h;
    img.width = w;
    img.channels = 1;
    img.pixels.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill);
    return img;
}

inline double max_abs_diff(const dnf::Tensor& a, const dnf::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

inline double rmse(const dnf::Tensor& a, const dnf::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

inline double rmse_u8(const dnf::ImageU8& a, const dnf::ImageU8& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.pixels.size()));
}

// Shell out and return the exit code; output goes to /dev/null unless kept.
inline int run_cmd(const std::string& cmd, bool quiet = true) {
    const std::string full = quiet ? cmd + " >/dev/null 2>&1" : cmd;
    const int rc = std::system(full.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

}  // namespace testutil
