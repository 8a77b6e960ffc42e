#include "flowcouple/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "flowcouple/error.hpp"
#include "flowcouple/io.hpp"

namespace flowcouple {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'K', 'P'};

class Writer {
public:
    template <typename T>
    void put(T value)
    {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        const U bits = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
    }

    void put_block(const ParameterSet& arrays)
    {
        put(static_cast<std::uint32_t>(arrays.size()));
        for (const auto& a : arrays) {
            put(static_cast<std::uint8_t>(a.rank()));
            for (std::size_t d : a.shape()) {
                put(static_cast<std::uint32_t>(d));
            }
            for (double v : a) {
                put(v);
            }
        }
    }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what)
    {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        require(sizeof(U), what);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<U>(static_cast<U>(bytes_[offset_ + i]) << (8 * i));
        }
        offset_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    ParameterSet get_block(const char* what)
    {
        const auto count = get<std::uint32_t>(what);
        ParameterSet arrays;
        for (std::uint32_t k = 0; k < count; ++k) {
            const std::size_t array_offset = offset_;
            const auto rank = get<std::uint8_t>("array rank");
            if (rank == 0 || rank > 2) {
                throw ParseError("checkpoint: unsupported array rank " + std::to_string(rank) + " at byte offset " +
                                     std::to_string(array_offset),
                                 array_offset);
            }
            std::vector<std::size_t> shape;
            std::size_t n = 1;
            for (std::uint8_t d = 0; d < rank; ++d) {
                shape.push_back(get<std::uint32_t>("array dimension"));
                n *= shape.back();
            }
            require(n * sizeof(double), "array values");
            std::vector<double> values(n);
            for (double& v : values) {
                v = get<double>("array values");
            }
            arrays.emplace_back(std::move(shape), std::move(values));
        }
        return arrays;
    }

    std::size_t offset() const noexcept { return offset_; }
    bool at_end() const noexcept { return offset_ == bytes_.size(); }

private:
    void require(std::size_t n, const char* what) const
    {
        if (bytes_.size() - offset_ < n) {
            throw ParseError(std::string("checkpoint: truncated while reading ") + what + " at byte offset " +
                                 std::to_string(offset_) + " (file has " + std::to_string(bytes_.size()) +
                                 " bytes)",
                             offset_);
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t offset_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const VelocityNet& net, const AdamState& adam)
{
    Writer w;
    for (char c : kMagic) {
        w.put(static_cast<std::uint8_t>(c));
    }
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint32_t>(net.config().state_dim));
    w.put(static_cast<std::uint32_t>(net.config().context_dim));
    w.put_block(net.parameters());
    w.put(static_cast<std::uint64_t>(adam.step_count));
    w.put(adam.beta1);
    w.put(adam.beta2);
    w.put(adam.epsilon);
    w.put(adam.learning_rate);
    w.put_block(adam.first_moment);
    w.put_block(adam.second_moment);
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    Reader r(bytes);
    for (char c : kMagic) {
        const std::size_t at = r.offset();
        if (r.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(c)) {
            throw ParseError("checkpoint: bad magic at byte offset " + std::to_string(at) + " (expected \"FCKP\")", at);
        }
    }
    const std::size_t version_at = r.offset();
    const auto version = r.get<std::uint16_t>("format version");
    if (version != kCheckpointVersion) {
        throw ParseError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ") at byte offset " + std::to_string(version_at),
                         version_at);
    }
    const auto state_dim = r.get<std::uint32_t>("state_dim");
    const auto context_dim = r.get<std::uint32_t>("context_dim");
    const std::size_t params_at = r.offset();
    ParameterSet params = r.get_block("parameter count");

    Checkpoint ckpt;
    try {
        ckpt.net = VelocityNet::from_parameters(state_dim, context_dim, std::move(params));
    } catch (const ContractViolation& e) {
        throw ParseError(std::string("checkpoint: parameter block at byte offset ") + std::to_string(params_at) +
                             " is inconsistent: " + e.what(),
                         params_at);
    }

    ckpt.adam.step_count = r.get<std::uint64_t>("adam step count");
    ckpt.adam.beta1 = r.get<double>("adam beta1");
    ckpt.adam.beta2 = r.get<double>("adam beta2");
    ckpt.adam.epsilon = r.get<double>("adam epsilon");
    ckpt.adam.learning_rate = r.get<double>("adam learning rate");
    const std::size_t moments_at = r.offset();
    ckpt.adam.first_moment = r.get_block("first moment count");
    ckpt.adam.second_moment = r.get_block("second moment count");

    const auto& ref = ckpt.net.parameters();
    auto matches = [&](const ParameterSet& m) {
        if (m.size() != ref.size()) {
            return false;
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!m[i].same_shape(ref[i])) {
                return false;
            }
        }
        return true;
    };
    if (!matches(ckpt.adam.first_moment) || !matches(ckpt.adam.second_moment)) {
        throw ParseError("checkpoint: optimizer moments at byte offset " + std::to_string(moments_at) +
                             " do not match parameter shapes",
                         moments_at);
    }
    if (!r.at_end()) {
        throw ParseError("checkpoint: trailing bytes after byte offset " + std::to_string(r.offset()), r.offset());
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net, const AdamState& adam)
{
    const auto bytes = encode_checkpoint(net, adam);
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace flowcouple
