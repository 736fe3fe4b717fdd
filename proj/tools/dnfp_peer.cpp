// Reference peer for the DNFP tensor protocol on stdin/stdout. Exists for
// integration tests and as a template for plugging in out-of-process
// predictors.
//
// Usage: dnfp_peer <mode> [args]
//   echo                                        reply with the request tensor
//   scale <factor>                              reply with request * factor
//   analytic <mu> <sigma2> <T> <b_start> <b_end>  closed-form Gaussian oracle
//   wrong-shape                                 always reply with a 1x1 tensor
//   error                                       always reply status 1
//   slow <ms>                                   sleep before each reply
//   bad-handshake                               print a wrong handshake line
//   exit-after-handshake                        handshake, then quit
//   truncate                                    reply with a cut-off frame

#include <chrono>
#include <cstdint>
#include <cstring>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dnf/io.hpp"
#include "dnf/predictor.hpp"
#include "dnf/schedule.hpp"
#include "dnf/tensor.hpp"

namespace {

// Returns false on clean EOF at a frame boundary.
bool read_request(std::istream& is, std::uint32_t& t, dnf::Tensor& x) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() == 0) return false;
    if (is.gcount() != 4) throw std::runtime_error("truncated request header");
    t = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    x = dnf::read_tensor(is);
    return true;
}

void write_ok(std::ostream& os, const dnf::Tensor& t) {
    os.put(static_cast<char>(0));
    dnf::write_tensor(os, t);
    os.flush();
}

void write_error(std::ostream& os, const std::string& msg) {
    os.put(static_cast<char>(1));
    const auto len = static_cast<std::uint32_t>(msg.size());
    const unsigned char b[4] = {static_cast<unsigned char>(len & 0xff),
                                static_cast<unsigned char>((len >> 8) & 0xff),
                                static_cast<unsigned char>((len >> 16) & 0xff),
                                static_cast<unsigned char>((len >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
    os.write(msg.data(), static_cast<std::streamsize>(msg.size()));
    os.flush();
}

}  // namespace

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    if (argc < 2) {
        std::cerr << "usage: dnfp_peer <mode> [args]\n";
        return 2;
    }
    const std::string mode = argv[1];

    if (mode == "bad-handshake") {
        std::cout << "HELLO 9\n" << std::flush;
        return 0;
    }
    std::cout << "DNFP 1\n" << std::flush;
    if (mode == "exit-after-handshake") return 0;

    double scale = 1.0;
    int slow_ms = 0;
    std::unique_ptr<dnf::NoisePredictor> oracle;
    dnf::NoiseSchedule schedule;
    try {
        if (mode == "scale") {
            if (argc < 3) throw std::runtime_error("scale needs a factor");
            scale = std::stod(argv[2]);
        } else if (mode == "slow") {
            if (argc < 3) throw std::runtime_error("slow needs milliseconds");
            slow_ms = std::stoi(argv[2]);
        } else if (mode == "analytic") {
            if (argc < 7) throw std::runtime_error("analytic needs mu sigma2 T beta_start beta_end");
            oracle = std::make_unique<dnf::AnalyticGaussianPredictor>(std::stod(argv[2]),
                                                                      std::stod(argv[3]));
            schedule = dnf::make_linear_schedule(std::stoi(argv[4]), std::stod(argv[5]),
                                                 std::stod(argv[6]));
        }
    } catch (const std::exception& e) {
        std::cerr << "dnfp_peer: " << e.what() << "\n";
        return 2;
    }

    try {
        std::uint32_t t = 0;
        dnf::Tensor x;
        while (read_request(std::cin, t, x)) {
            if (slow_ms > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(slow_ms));
            if (mode == "error") {
                write_error(std::cout, "peer synthetic failure");
            } else if (mode == "wrong-shape") {
                write_ok(std::cout, dnf::Tensor({1, 1}, {0.0}));
            } else if (mode == "truncate") {
                std::cout.put(static_cast<char>(0));
                std::cout.write("DN", 2);  // half a container magic, then quit
                std::cout.flush();
                return 0;
            } else if (mode == "analytic") {
                write_ok(std::cout, oracle->predict(x, static_cast<int>(t), schedule));
            } else if (mode == "scale") {
                write_ok(std::cout, x * scale);
            } else if (mode == "echo" || mode == "slow") {
                write_ok(std::cout, x);
            } else {
                write_error(std::cout, "unknown peer mode: " + mode);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "dnfp_peer: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
