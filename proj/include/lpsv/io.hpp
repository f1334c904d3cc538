#ifndef LPSV_IO_HPP
#define LPSV_IO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpsv/errors.hpp"
#include "lpsv/particle.hpp"
#include "lpsv/spde.hpp"

namespace lpsv {

inline std::uint64_t fnv1a_hash(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary: no CRLF translation
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.precision(17);
    return out;
}

} // namespace detail

// CSV with header "t,loss".
inline void write_loss_csv(const std::filesystem::path& path,
                           const std::vector<double>& times,
                           const std::vector<double>& loss) {
    if (times.size() != loss.size())
        throw ShapeError("write_loss_csv: times/loss size mismatch");
    auto out = detail::open_out(path);
    out << "t,loss\n";
    for (std::size_t i = 0; i < times.size(); ++i)
        out << times[i] << ',' << loss[i] << '\n';
}

// CSV with header "t,loss,bin_x,bin_y,count": one row per histogram bin per
// recorded snapshot.
inline void write_snapshot_csv(const std::filesystem::path& path,
                               const std::vector<EmpiricalSnapshot>& snaps) {
    auto out = detail::open_out(path);
    out << "t,loss,bin_x,bin_y,count\n";
    for (const auto& s : snaps)
        for (std::size_t bx = 0; bx < s.nx; ++bx)
            for (std::size_t by = 0; by < s.ny; ++by)
                out << s.t << ',' << s.loss << ',' << bx << ',' << by << ','
                    << s.counts[bx * s.ny + by] << '\n';
}

// CSV with header "t,x,y,u".
inline void write_grid_csv(const std::filesystem::path& path,
                           const DensityGrid& g) {
    auto out = detail::open_out(path);
    out << "t,x,y,u\n";
    for (std::size_t j = 0; j < g.nx; ++j)
        for (std::size_t k = 0; k < g.ny; ++k)
            out << g.t << ',' << g.x(j) << ',' << g.y(k) << ',' << g.at(j, k)
                << '\n';
}

// JSON-lines report file: one compact JSON object per line.
inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& records) {
    auto out = detail::open_out(path);
    for (const auto& rec : records) out << rec.dump() << '\n';
}

// Run manifest; written after every other artifact so its file list is
// complete. Reproducibility: config hash + seeds identify the run.
inline void write_manifest(const std::filesystem::path& out_dir,
                           const std::string& config_text,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<std::string>& files) {
    nlohmann::json m;
    m["format_version"] = 1;
    m["config_fnv1a"] = fnv1a_hash(config_text);
    m["seeds"] = seeds;
    m["files"] = files;
    auto out = detail::open_out(out_dir / "manifest.json");
    out << m.dump(2) << '\n';
}

} // namespace lpsv

#endif
