#include "dribo/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace dribo {

using ndgrad::Tensor;

namespace {

constexpr char kMagic[8] = {'D', 'R', 'I', 'B', 'O', 'C', 'K', 'P'};
// Guards against absurd allocations when decoding damaged input.
constexpr std::uint64_t kMaxRank = 8;

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw IoError(std::string("checkpoint truncated while reading ") + what);
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string encode_header(const std::map<std::string, std::string>& header) {
    std::string text;
    for (const auto& [k, v] : header) {
        if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw IoError("checkpoint header entry not encodable: " + k);
        text += k + "=" + v + "\n";
    }
    return text;
}

std::map<std::string, std::string> decode_header(const std::string& text) {
    std::map<std::string, std::string> header;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) throw IoError("checkpoint header is corrupted: '" + line + "'");
        if (!header.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
            throw IoError("checkpoint header has duplicate key " + line.substr(0, eq));
    }
    if (!text.empty() && text.back() != '\n') throw IoError("checkpoint header is corrupted: missing terminator");
    return header;
}

}  // namespace

void Checkpoint::add_registry(const std::string& prefix, const ParamRegistry& registry) {
    for (const auto& e : registry.entries()) tensors.emplace_back(prefix + "/" + e.name, e.node.value());
}

ParamRegistry Checkpoint::extract_registry(const std::string& prefix) const {
    ParamRegistry reg;
    const std::string p = prefix + "/";
    for (const auto& [name, t] : tensors)
        if (name.compare(0, p.size(), p) == 0) reg.add(name.substr(p.size()), t);
    if (reg.entries().empty()) throw IoError("checkpoint has no tensors under " + prefix);
    return reg;
}

void Checkpoint::load_into(const std::string& prefix, ParamRegistry& registry) const {
    registry.copy_values_from(extract_registry(prefix));
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    const std::string p = prefix + "/";
    for (const auto& entry : tensors)
        if (entry.first.compare(0, p.size(), p) == 0) return true;
    return false;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    const std::string header = encode_header(ckpt.header);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_le<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
        for (double v : t.storage()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.take(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw IoError("not a checkpoint file (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw IoError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    const auto header_len = r.get<std::uint32_t>("header length");
    ckpt.header = decode_header(r.take(header_len, "header"));
    const auto count = r.get<std::uint64_t>("tensor count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>("tensor name length");
        std::string name = r.take(name_len, "tensor name");
        const auto rank = r.get<std::uint32_t>("tensor rank");
        if (rank == 0 || rank > kMaxRank) throw IoError("checkpoint tensor " + name + " has invalid rank");
        ndgrad::Shape shape;
        std::uint64_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("tensor dims")));
            n *= shape.back();
        }
        if (n > r.remaining() / 8) throw IoError("checkpoint truncated in tensor " + name);
        std::vector<double> data(n);
        for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>("tensor data"));
        ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.done()) throw IoError("checkpoint has trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    // Write then rename so a crash never leaves a half-written checkpoint behind.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

}  // namespace dribo
