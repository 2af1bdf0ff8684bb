#pragma once

#include <cstdint>
#include <vector>

namespace fedvisor {

// Byte transform applied to model payloads on the wire. The default is the
// identity; a real deployment would hang its encryption here. decode must
// invert encode.
class ParamCodec {
public:
    virtual ~ParamCodec() = default;
    virtual std::vector<std::uint8_t> encode(std::vector<std::uint8_t> plain) const {
        return plain;
    }
    virtual std::vector<std::uint8_t> decode(std::vector<std::uint8_t> coded) const {
        return coded;
    }
};

inline const ParamCodec& identity_codec() {
    static const ParamCodec codec;
    return codec;
}

}  // namespace fedvisor
