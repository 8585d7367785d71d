#include "semadv/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "semadv/error.hpp"

namespace semadv {

namespace {
constexpr char MAGIC[4] = {'S', 'M', 'C', 'K'};
constexpr uint32_t VERSION = 1;

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("checkpoint: truncated while reading ") + what);
    return v;
}
}  // namespace

void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + path.string());
    out.write(MAGIC, 4);
    write_pod(out, VERSION);
    write_pod(out, static_cast<uint32_t>(tensors.size()));
    for (auto& [name, t] : tensors) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(t->shape().size()));
        for (int64_t d : t->shape()) write_pod(out, static_cast<int64_t>(d));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel()) * static_cast<std::streamsize>(sizeof(float)));
    }
    if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

std::map<std::string, Tensor<float>> load_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, MAGIC, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());
    uint32_t version = read_pod<uint32_t>(in, "version");
    if (version != VERSION)
        throw IoError("checkpoint: unsupported version in " + path.string());
    uint32_t count = read_pod<uint32_t>(in, "tensor count");
    std::map<std::string, Tensor<float>> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_pod<uint32_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw IoError("checkpoint: truncated name in " + path.string());
        uint32_t rank = read_pod<uint32_t>(in, "rank");
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = read_pod<int64_t>(in, "dimension");
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel()) * static_cast<std::streamsize>(sizeof(float)));
        if (!in) throw IoError("checkpoint: truncated payload in " + path.string());
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace semadv
