#pragma once

// Checkpoint container: magic "LBAL", format version, then named sections,
// each holding one serialized Matrix. Round-trips bit-exactly.

#include <fstream>
#include <map>
#include <string>

#include "logbal/errors.hpp"
#include "logbal/matrix.hpp"

namespace logbal {

inline constexpr char kCheckpointMagic[5] = "LBAL";
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointContainer {
    std::map<std::string, Matf> sections;

    void put(const std::string& name, const Matf& m) { sections[name] = m; }

    const Matf& get(const std::string& name) const {
        auto it = sections.find(name);
        if (it == sections.end()) throw IoError("checkpoint: missing section '" + name + "'");
        return it->second;
    }

    bool has(const std::string& name) const { return sections.count(name) > 0; }

    void save(std::ostream& os) const {
        os.write(kCheckpointMagic, 4);
        detail::write_u32(os, kCheckpointVersion);
        detail::write_u32(os, static_cast<uint32_t>(sections.size()));
        for (const auto& [name, mat] : sections) {
            detail::write_u32(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::write_u64(os, matrix_byte_size(mat));
            write_matrix(os, mat);
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open checkpoint for writing: " + path);
        save(out);
        if (!out) throw IoError("write failure on checkpoint: " + path);
    }

    static CheckpointContainer load(std::istream& is) {
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4))
            throw IoError("checkpoint: bad magic");
        const uint32_t version = detail::read_u32(is);
        if (version != kCheckpointVersion)
            throw IoError("checkpoint: unsupported version " + std::to_string(version));
        const uint32_t count = detail::read_u32(is);
        CheckpointContainer c;
        for (uint32_t i = 0; i < count; ++i) {
            const uint32_t name_len = detail::read_u32(is);
            std::string name(name_len, '\0');
            is.read(name.data(), name_len);
            const uint64_t payload = detail::read_u64(is);
            Matf m = read_matrix(is);
            if (matrix_byte_size(m) != payload)
                throw IoError("checkpoint: section '" + name + "' length mismatch");
            c.sections.emplace(std::move(name), std::move(m));
        }
        return c;
    }

    static CheckpointContainer load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        return load(in);
    }
};

} // namespace logbal
