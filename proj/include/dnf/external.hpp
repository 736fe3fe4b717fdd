#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dnf/predictor.hpp"

namespace dnf {

// Noise predictor served by a child process over stdin/stdout.
//
// Wire protocol ("DNFP"): the peer prints the handshake line "DNFP 1\n" on
// startup; each request is [u32 t LE][tensor container]; each response is
// [status u8][payload] where status 0 carries a tensor container and status 1
// carries a u32-length-prefixed UTF-8 message. One request is in flight at a
// time; predict serializes callers internally.
class ExternalPredictor final : public NoisePredictor {
public:
    explicit ExternalPredictor(std::vector<std::string> command, int timeout_ms = 10000);
    ~ExternalPredictor() override;

    ExternalPredictor(const ExternalPredictor&) = delete;
    ExternalPredictor& operator=(const ExternalPredictor&) = delete;

    Tensor predict(const Tensor& x, int t, const NoiseSchedule& schedule) const override;
    std::string id() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dnf
