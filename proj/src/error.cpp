#include "helioaim/error.hpp"

namespace helioaim {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidConfig: return "invalid-config";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::InvalidMesh: return "invalid-mesh";
        case ErrorKind::Encoding: return "encoding";
        case ErrorKind::InvalidTrustRegion: return "invalid-trust-region";
        case ErrorKind::Backend: return "backend";
        case ErrorKind::Usage: return "usage";
        case ErrorKind::TrainingDiverged: return "training-diverged";
        case ErrorKind::Run: return "run";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace helioaim
