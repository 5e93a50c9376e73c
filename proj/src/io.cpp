#include "csrnet/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csrnet/errors.hpp"
#include "csrnet/random.hpp"

namespace csrnet {

namespace {

// Netpbm header token reader: skips whitespace and '#' comment lines.
std::string next_token(std::istream& is, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) continue;
        tok.push_back(static_cast<char>(ch));
        while ((ch = is.get()) != EOF && !std::isspace(ch) && ch != '#')
            tok.push_back(static_cast<char>(ch));
        if (ch == '#') is.unget();
        return tok;
    }
    throw parse_error("unexpected end of header in " + path);
}

int header_int(std::istream& is, const std::string& path, const char* what) {
    const std::string tok = next_token(is, path);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw parse_error(std::string("bad ") + what + " '" + tok + "' in " + path);
    }
}

struct PnmImage {
    int channels = 0, h = 0, w = 0;
    std::vector<std::uint8_t> bytes; // interleaved for P6
};

PnmImage load_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open image: " + path.string());
    char magic[2];
    if (!is.read(magic, 2))
        throw parse_error("truncated header in " + path.string());
    PnmImage img;
    if (magic[0] == 'P' && magic[1] == '5') img.channels = 1;
    else if (magic[0] == 'P' && magic[1] == '6') img.channels = 3;
    else
        throw parse_error("unknown magic in " + path.string() + " (want P5 or P6)");
    img.w = header_int(is, path.string(), "width");
    img.h = header_int(is, path.string(), "height");
    const int maxval = header_int(is, path.string(), "maxval");
    if (maxval != 255)
        throw parse_error("unsupported maxval " + std::to_string(maxval) + " in " + path.string());
    if (img.w < 1 || img.h < 1)
        throw parse_error("bad dimensions in " + path.string());
    // header_int consumed exactly one whitespace byte after maxval
    const std::size_t n = static_cast<std::size_t>(img.channels) * img.h * img.w;
    img.bytes.resize(n);
    if (!is.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(n)))
        throw parse_error("truncated pixel payload in " + path.string());
    return img;
}

} // namespace

Tensor4 load_image(const std::filesystem::path& path) {
    const PnmImage img = load_pnm(path);
    Tensor4 t(1, img.channels, img.h, img.w);
    std::size_t bi = 0;
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < img.channels; ++ch, ++bi)
                t.at(0, ch, r, c) = static_cast<float>(img.bytes[bi]) / 255.0f;
    return t;
}

Tensor4 load_image_rgb(const std::filesystem::path& path) {
    Tensor4 t = load_image(path);
    if (t.c == 3) return t;
    Tensor4 rgb(1, 3, t.h, t.w);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < t.h; ++r)
            for (int c = 0; c < t.w; ++c)
                rgb.at(0, ch, r, c) = t.at(0, 0, r, c);
    return rgb;
}

void save_image(const Tensor4& image, const std::filesystem::path& path) {
    if (image.n != 1 || (image.c != 1 && image.c != 3))
        throw std::invalid_argument("save_image: need a 1x1xHxW or 1x3xHxW tensor");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("cannot open image for writing: " + path.string());
    os << (image.c == 1 ? "P5" : "P6") << '\n' << image.w << ' ' << image.h << '\n' << "255\n";
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.c) * image.h * image.w);
    std::size_t bi = 0;
    for (int r = 0; r < image.h; ++r)
        for (int c = 0; c < image.w; ++c)
            for (int ch = 0; ch < image.c; ++ch, ++bi) {
                const float v = std::clamp(image.at(0, ch, r, c), 0.0f, 1.0f);
                bytes[bi] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw io_error("write failed: " + path.string());
}

HeadAnnotations parse_annotations(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw io_error("cannot open annotations: " + path.string());
    std::string line;
    if (!std::getline(is, line))
        throw parse_error("empty annotation file: " + path.string());
    if (line.ends_with('\r')) line.pop_back();
    if (line != "x,y")
        throw parse_error("missing 'x,y' header in " + path.string());
    HeadAnnotations points;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.ends_with('\r')) line.pop_back();
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument(line);
            std::size_t used = 0;
            const double x = std::stod(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument(line);
            const double y = std::stod(line.substr(comma + 1), &used);
            if (used != line.size() - comma - 1) throw std::invalid_argument(line);
            points.push_back({x, y});
        } catch (const std::exception&) {
            throw parse_error("malformed annotation at " + path.string() + ":" +
                              std::to_string(lineno));
        }
    }
    return points;
}

void save_annotations(const HeadAnnotations& points, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os)
        throw io_error("cannot open annotations for writing: " + path.string());
    os << "x,y\n";
    os.precision(17);
    for (const Point& p : points) os << p.x << ',' << p.y << '\n';
    if (!os)
        throw io_error("write failed: " + path.string());
}

RoiMask parse_roi(const std::filesystem::path& path) {
    const PnmImage img = load_pnm(path);
    if (img.channels != 1)
        throw parse_error("ROI must be a P5 grayscale image: " + path.string());
    RoiMask roi;
    roi.h = img.h;
    roi.w = img.w;
    roi.mask.resize(img.bytes.size());
    for (std::size_t i = 0; i < img.bytes.size(); ++i)
        roi.mask[i] = img.bytes[i] != 0 ? 1 : 0;
    return roi;
}

namespace {

constexpr char kDensityMagic[4] = {'C', 'S', 'D', 'M'};

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw parse_error("truncated density map file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_density_map(const DensityMap& map, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("cannot open density map for writing: " + path.string());
    os.write(kDensityMagic, 4);
    write_u32_le(os, 1);
    write_u32_le(os, static_cast<std::uint32_t>(map.h));
    write_u32_le(os, static_cast<std::uint32_t>(map.w));
    for (double v : map.values)
        write_u32_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!os)
        throw io_error("write failed: " + path.string());
}

DensityMap load_density_map(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open density map: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kDensityMagic, 4) != 0)
        throw parse_error("bad magic in density map file: " + path.string());
    const std::uint32_t version = read_u32_le(is, path.string());
    if (version != 1)
        throw parse_error("unsupported density map version " + std::to_string(version));
    const std::uint32_t h = read_u32_le(is, path.string());
    const std::uint32_t w = read_u32_le(is, path.string());
    if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        throw parse_error("implausible dims in density map file: " + path.string());
    DensityMap map(static_cast<int>(h), static_cast<int>(w));
    for (double& v : map.values)
        v = static_cast<double>(std::bit_cast<float>(read_u32_le(is, path.string())));
    return map;
}

void export_visual(const DensityMap& map, const std::filesystem::path& path) {
    Tensor4 img(1, 1, map.h, map.w);
    const double peak = map.max_value();
    if (peak > 0.0) {
        for (int r = 0; r < map.h; ++r)
            for (int c = 0; c < map.w; ++c)
                img.at(0, 0, r, c) = static_cast<float>(std::max(map.at(r, c), 0.0) / peak);
    }
    save_image(img, path);
}

SigmaPolicy parse_policy(const std::string& name) {
    if (name == "adaptive" || name == "geometry-adaptive")
        return SigmaPolicy::geometry_adaptive();
    if (name.starts_with("fixed:")) {
        try {
            std::size_t used = 0;
            const double sigma = std::stod(name.substr(6), &used);
            if (used != name.size() - 6 || sigma <= 0.0) throw std::invalid_argument(name);
            return SigmaPolicy::fixed(sigma);
        } catch (const std::exception&) {
            throw parse_error("bad sigma in policy '" + name + "'");
        }
    }
    throw parse_error("unknown sigma policy '" + name +
                      "' (expected geometry-adaptive or fixed:<sigma>)");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw io_error("cannot open manifest: " + path.string());
    const std::filesystem::path base = path.parent_path();
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.ends_with('\r')) line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (!line.starts_with("policy="))
                throw parse_error("manifest must start with 'policy=<name>': " + path.string());
            m.policy_name = line.substr(7);
            parse_policy(m.policy_name); // validate early
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty())
            throw parse_error("malformed manifest record at " + path.string() + ":" +
                              std::to_string(lineno));
        SceneRecord rec;
        rec.image_path = base / fields[0];
        rec.annotation_path = base / fields[1];
        if (fields.size() == 3 && !fields[2].empty()) rec.roi_path = base / fields[2];
        m.scenes.push_back(std::move(rec));
    }
    if (m.policy_name.empty())
        throw parse_error("empty manifest: " + path.string());
    if (m.scenes.empty())
        throw parse_error("manifest lists no scenes: " + path.string());
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os)
        throw io_error("cannot open manifest for writing: " + path.string());
    os << "policy=" << manifest.policy_name << '\n';
    for (const SceneRecord& rec : manifest.scenes) {
        os << rec.image_path.filename().string() << '\t' << rec.annotation_path.filename().string();
        if (rec.has_roi()) os << '\t' << rec.roi_path.filename().string();
        os << '\n';
    }
    if (!os)
        throw io_error("write failed: " + path.string());
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
    if (spec.height < 1 || spec.width < 1 || spec.count_min < 0 ||
        spec.count_min > spec.count_max || spec.blob_radius_min <= 0.0 ||
        spec.blob_radius_min > spec.blob_radius_max)
        throw std::invalid_argument("generate_synthetic_scene: bad spec");

    std::mt19937_64 gen(spec.seed);
    const int count = spec.count_min +
        static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(spec.count_max - spec.count_min + 1)));

    const int margin = static_cast<int>(std::ceil(spec.blob_radius_max)) + 1;
    std::vector<double> radius;
    HeadAnnotations centers;
    for (int i = 0; i < count; ++i) {
        const double r = uniform_real(gen, spec.blob_radius_min, spec.blob_radius_max);
        // keep centers apart so each annotation stays the local peak of its blob
        Point p{};
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            const int lo_y = std::min(margin, spec.height - 1);
            const int hi_y = std::max(spec.height - 1 - margin, lo_y);
            const int lo_x = std::min(margin, spec.width - 1);
            const int hi_x = std::max(spec.width - 1 - margin, lo_x);
            p.y = static_cast<double>(lo_y + static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(hi_y - lo_y + 1))));
            p.x = static_cast<double>(lo_x + static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(hi_x - lo_x + 1))));
            placed = true;
            for (std::size_t j = 0; j < centers.size(); ++j) {
                const double dx = centers[j].x - p.x;
                const double dy = centers[j].y - p.y;
                if (std::sqrt(dx * dx + dy * dy) < radius[j] + r) {
                    placed = false;
                    break;
                }
            }
        }
        centers.push_back(p); // keep the last attempt even if crowded
        radius.push_back(r);
    }

    SyntheticScene scene;
    scene.image = Tensor4(1, 1, spec.height, spec.width);
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c)
            scene.image.at(0, 0, r, c) = static_cast<float>(uniform_real(gen, 0.0, 0.05));
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double amp = uniform_real(gen, 0.6, 0.9);
        const double s = radius[i] / 2.0;
        const int reach = static_cast<int>(std::ceil(3.0 * radius[i]));
        const int r0 = std::max(0, static_cast<int>(centers[i].y) - reach);
        const int r1 = std::min(spec.height - 1, static_cast<int>(centers[i].y) + reach);
        const int c0 = std::max(0, static_cast<int>(centers[i].x) - reach);
        const int c1 = std::min(spec.width - 1, static_cast<int>(centers[i].x) + reach);
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double dx = c - centers[i].x;
                const double dy = r - centers[i].y;
                float& px = scene.image.at(0, 0, r, c);
                px = std::min(1.0f, px + static_cast<float>(amp * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s))));
            }
        }
    }
    scene.points = std::move(centers);
    return scene;
}

SyntheticSceneSpec parse_synthetic_spec_json(const std::filesystem::path& path,
                                             std::string* policy_name) {
    std::ifstream is(path);
    if (!is)
        throw io_error("cannot open scene spec: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("bad JSON in " + path.string() + ": " + e.what());
    }
    try {
        SyntheticSceneSpec spec;
        spec.height = j.at("height").get<int>();
        spec.width = j.at("width").get<int>();
        spec.count_min = j.at("count_range").at(0).get<int>();
        spec.count_max = j.at("count_range").at(1).get<int>();
        spec.blob_radius_min = j.at("blob_radius_range").at(0).get<double>();
        spec.blob_radius_max = j.at("blob_radius_range").at(1).get<double>();
        spec.seed = j.value("seed", 0ull);
        if (policy_name) *policy_name = j.value("policy", std::string("geometry-adaptive"));
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("bad scene spec in " + path.string() + ": " + e.what());
    }
}

} // namespace csrnet
