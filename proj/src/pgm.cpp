#include "cats/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cats {

void write_pgm(const Grid& grid, const std::filesystem::path& path) {
    if (grid.channels() != 1) {
        throw std::invalid_argument("write_pgm: grid must be single-channel");
    }
    if (grid.min_value() < 0.0 || grid.max_value() > 1.0) {
        throw std::invalid_argument("write_pgm: values must lie in [0, 1]");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
    os << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
    std::string payload;
    payload.reserve(grid.size());
    for (double v : grid.values()) {
        payload.push_back(static_cast<char>(
            static_cast<unsigned char>(std::floor(v * 255.0 + 0.5))));
    }
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

namespace {

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t offset,
                          const std::string& what) {
    throw std::runtime_error("read_pgm: " + path.string() + ": " + what + " at byte " +
                             std::to_string(offset));
}

void skip_space_and_comments(const std::string& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
}

long parse_int(const std::string& buf, std::size_t& pos,
               const std::filesystem::path& path, const char* what) {
    skip_space_and_comments(buf, pos);
    if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) {
        fail_at(path, pos, std::string("expected ") + what);
    }
    long value = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
        value = value * 10 + (buf[pos] - '0');
        if (value > 1 << 30) fail_at(path, pos, std::string(what) + " out of range");
        ++pos;
    }
    return value;
}

}  // namespace

Grid read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_pgm: cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '2')) {
        fail_at(path, 0, "expected P5 or P2 magic");
    }
    const bool binary = buf[1] == '5';
    pos = 2;
    const long width = parse_int(buf, pos, path, "width");
    const long height = parse_int(buf, pos, path, "height");
    const long maxval = parse_int(buf, pos, path, "maxval");
    if (width <= 0 || height <= 0) fail_at(path, pos, "non-positive dimensions");
    if (maxval <= 0 || maxval > 255) fail_at(path, pos, "unsupported maxval");

    Grid grid(static_cast<int>(height), static_cast<int>(width), 1);
    const double scale = 1.0 / static_cast<double>(maxval);
    if (binary) {
        if (pos >= buf.size() ||
            !std::isspace(static_cast<unsigned char>(buf[pos]))) {
            fail_at(path, pos, "expected single whitespace before payload");
        }
        ++pos;
        if (buf.size() - pos < grid.size()) {
            fail_at(path, buf.size(), "truncated payload");
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto raw = static_cast<unsigned char>(buf[pos + i]);
            if (raw > maxval) fail_at(path, pos + i, "sample exceeds maxval");
            grid[i] = raw * scale;
        }
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const long raw = parse_int(buf, pos, path, "sample");
            if (raw > maxval) fail_at(path, pos, "sample exceeds maxval");
            grid[i] = raw * scale;
        }
    }
    return grid;
}

}  // namespace cats
