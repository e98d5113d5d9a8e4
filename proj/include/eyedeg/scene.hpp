// Deterministic procedural renderer for 48x128 two-eye grayscale crops in two
// appearance domains, plus dataset and blink-sequence generation.
//
// Geometry: each eye is a lens-shaped aperture between two parabolic eyelid
// curves whose half-heights scale linearly with the openness degree. The iris
// disk shifts with gaze; camera pitch/yaw drive a whole-crop affine
// scale/shear. Style effects (glasses, glare, gamma, blur, noise) are applied
// after geometry, so the aperture pixel count is a pure function of geometry
// and serves as the ground-truth oracle for openness monotonicity.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eyedeg/errors.hpp"
#include "eyedeg/image.hpp"
#include "eyedeg/manifest.hpp"
#include "eyedeg/rng.hpp"

namespace eyedeg {

struct SceneParams {
    double openness = 100.0;  // degree in [0, 100]
    double gaze_v = 0.0;      // vertical gaze, [-25, 25] deg
    double gaze_h = 0.0;      // horizontal gaze, [-35, 35] deg
    double cam_pitch = 0.0;   // [-30, 30] deg
    double cam_yaw = 0.0;     // [-30, 30] deg
    int subject_id = 0;
    std::uint64_t seed = 0;
};

struct DomainStyle {
    double skin_lo = 150.0, skin_hi = 210.0;  // base skin intensity range
    double noise_sigma = 0.0;
    int blur_radius = 0;
    double gamma = 1.0;
    double glare_prob = 0.0;
    double glasses_prob = 0.0;

    static DomainStyle syn() { return DomainStyle{}; }
    // Darker sensor-like tonal curve with optics and occluder artifacts; the
    // shift is strong enough that a synthetic-only model measurably degrades.
    static DomainStyle real() { return DomainStyle{88.0, 150.0, 7.0, 1, 0.72, 0.25, 0.35}; }

    static DomainStyle by_name(const std::string& name) {
        if (name == "syn") return syn();
        if (name == "real") return real();
        throw ConfigError("unknown style '" + name + "' (expected syn|real)");
    }
};

struct RenderOutput {
    Image image;            // 48x128, [0,255]
    int aperture_area = 0;  // open-fissure pixel count over both eyes
    double degree = 0.0;    // ground truth openness
    SceneParams params;
};

// Per-subject appearance, derived deterministically from the subject id.
struct SubjectAppearance {
    double half_w;      // eye half width, px
    double upper_amp;   // upper lid amplitude at openness 100
    double lower_amp;   // lower lid amplitude at openness 100
    double iris_r;
    double tone;        // 0 dark .. 1 light within the style's skin range
    double brow_drop;   // brow distance above the upper lid arc
};

inline SubjectAppearance subject_appearance(int subject_id) {
    if (subject_id < 0) throw DataError("subject id must be >= 0");
    Rng rng(hash_mix(0x5eedface, static_cast<std::uint64_t>(subject_id)));
    SubjectAppearance s{};
    s.half_w = rng.uniform(17.0, 22.0);
    s.upper_amp = rng.uniform(6.5, 9.5);
    s.lower_amp = rng.uniform(3.2, 4.8);
    s.iris_r = rng.uniform(4.5, 7.0);
    s.tone = rng.uniform(0.25, 0.90);
    s.brow_drop = rng.uniform(5.0, 8.0);
    return s;
}

namespace detail {

constexpr int kCropW = 128;
constexpr int kCropH = 48;
constexpr double kEyeY = 24.0;
constexpr double kEyeXLeft = 32.0;
constexpr double kEyeXRight = 96.0;
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

struct EyeGeom {
    double ex;          // eye center x in scene coords
    double hu, hl;      // lid half-heights at this openness (center column)
    double gx, gy;      // iris center offset
};

// True if scene point (du,dv) relative to an eye center lies in the open
// fissure. A one-cell slit at the eye center is kept open for any positive
// openness so the rasterized area is zero exactly when the eye is closed.
inline bool aperture_at(double du, double dv, double s, const SubjectAppearance& a) {
    if (s <= 0.0) return false;
    if (std::abs(du) < a.half_w) {
        const double t = du / a.half_w;
        const double g = 1.0 - t * t;
        if (dv > -s * a.upper_amp * g && dv < s * a.lower_amp * g) return true;
    }
    return du > -1.0 && du <= 1.0 && dv > -1.0 && dv <= 1.0;
}

}  // namespace detail

inline void validate(const SceneParams& p) {
    if (!(p.openness >= 0.0 && p.openness <= 100.0))
        throw DataError("scene: openness must lie in [0,100]");
    if (!(p.gaze_v >= -25.0 && p.gaze_v <= 25.0))
        throw DataError("scene: vertical gaze must lie in [-25,25]");
    if (!(p.gaze_h >= -35.0 && p.gaze_h <= 35.0))
        throw DataError("scene: horizontal gaze must lie in [-35,35]");
    if (!(p.cam_pitch >= -30.0 && p.cam_pitch <= 30.0 && p.cam_yaw >= -30.0 && p.cam_yaw <= 30.0))
        throw DataError("scene: camera angles must lie in [-30,30]");
    if (p.subject_id < 0) throw DataError("scene: subject id must be >= 0");
    if (!(p.openness >= 0)) throw DataError("scene: bad openness");
}

inline RenderOutput render_eye_crop(const SceneParams& p, const DomainStyle& style) {
    using namespace detail;
    validate(p);
    const SubjectAppearance subj = subject_appearance(p.subject_id);
    const double s = p.openness / 100.0;

    // per-sample style decisions; drawn unconditionally to keep the stream fixed
    Rng deco(hash_mix(p.seed, 0xE1));
    const bool glasses_on = deco.next_double() < style.glasses_prob;
    const bool glare_on = deco.next_double() < style.glare_prob;
    const double glare_eye = deco.below(2) ? kEyeXRight : kEyeXLeft;
    const double glare_ox = deco.uniform(-0.4, 0.4) * subj.half_w;
    const double glare_oy = deco.uniform(-0.5, 0.1) * subj.upper_amp;

    const double skin = style.skin_lo + subj.tone * (style.skin_hi - style.skin_lo);
    const double sclera = std::min(skin + 65.0, 250.0);
    const double iris_c = 42.0, pupil_c = 18.0;
    const double lash = std::max(skin - 70.0, 8.0);
    const double brow = std::max(skin - 55.0, 12.0);
    const double frame_c = 25.0;

    const double t_pitch = std::tan(deg2rad(p.cam_pitch));
    const double t_yaw = std::tan(deg2rad(p.cam_yaw));
    const double c_pitch = std::cos(deg2rad(p.cam_pitch));
    const double c_yaw = std::cos(deg2rad(p.cam_yaw));

    const double gx = 0.30 * subj.half_w * std::sin(deg2rad(p.gaze_h));
    const double gy = 0.35 * subj.upper_amp * std::sin(deg2rad(p.gaze_v));

    std::vector<double> lum(static_cast<std::size_t>(kCropW) * kCropH);
    int area = 0;
    for (int row = 0; row < kCropH; ++row) {
        for (int col = 0; col < kCropW; ++col) {
            const double x = col + 0.5, y = row + 0.5;
            // camera: output pixel -> scene coordinates
            const double u = 64.0 + (x - 64.0) / c_yaw + 0.18 * t_pitch * (y - kEyeY);
            const double v = kEyeY + (y - kEyeY) / c_pitch + 0.10 * t_yaw * (x - 64.0);

            double c = skin + 5.0 * (v - kEyeY) / 24.0 + 3.0 * (u - 64.0) / 64.0;
            bool in_aperture = false;
            for (const double ex : {kEyeXLeft, kEyeXRight}) {
                const double du = u - ex;
                const double dv = v - kEyeY;
                const double aw = subj.half_w;
                if (std::abs(du) < aw + 8.0) {
                    const double tt = du / (aw + 3.0);
                    // static crease and brow, independent of openness
                    if (std::abs(du) < aw) {
                        const double g = 1.0 - (du / aw) * (du / aw);
                        const double yc = -subj.upper_amp * g;
                        if (dv >= yc - 3.4 && dv <= yc - 2.4) c = skin - 28.0;
                    }
                    if (std::abs(tt) <= 1.0) {
                        const double yb = -(subj.upper_amp + subj.brow_drop) * (1.0 - 0.5 * tt * tt);
                        if (std::abs(dv - yb) <= 1.3) c = brow;
                    }
                }
                if (aperture_at(du, dv, s, subj)) {
                    in_aperture = true;
                    c = sclera;
                    const double ix = du - gx, iy = dv - gy;
                    const double r2 = ix * ix + iy * iy;
                    if (r2 <= subj.iris_r * subj.iris_r) c = iris_c;
                    if (r2 <= 0.2025 * subj.iris_r * subj.iris_r) c = pupil_c;
                }
                if (std::abs(du) < aw) {
                    const double g = 1.0 - (du / aw) * (du / aw);
                    const double hu = s * subj.upper_amp * g;
                    const double hl = s * subj.lower_amp * g;
                    const double taper = 0.35 + 0.65 * g;
                    if (dv >= -hu - 1.4 * taper && dv <= -hu) c = lash;
                    if (dv >= hl && dv <= hl + 0.9 * taper) c = skin - 25.0;
                }
                if (glasses_on) {
                    const double adx = std::abs(du), ady = std::abs(dv);
                    const bool vertical = adx >= aw + 4.0 && adx <= aw + 6.0 && ady <= subj.upper_amp + 7.0;
                    const bool horizontal = ady >= subj.upper_amp + 5.0 && ady <= subj.upper_amp + 7.0 &&
                                            adx <= aw + 6.0;
                    if (vertical || horizontal) c = frame_c;
                }
            }
            if (glasses_on && std::abs(v - kEyeY) <= 1.0 && u > kEyeXLeft + subj.half_w + 6.0 &&
                u < kEyeXRight - subj.half_w - 6.0)
                c = frame_c;
            if (glare_on) {
                const double dgx = u - (glare_eye + glare_ox);
                const double dgy = v - (kEyeY + glare_oy);
                if (dgx * dgx + dgy * dgy <= 2.6 * 2.6) c = std::max(c, 248.0);
            }
            if (in_aperture) ++area;
            lum[static_cast<std::size_t>(row) * kCropW + col] = c;
        }
    }

    // tonal curve
    if (style.gamma != 1.0) {
        for (double& c : lum) {
            const double n = std::clamp(c, 0.0, 255.0) / 255.0;
            c = 255.0 * std::pow(n, style.gamma);
        }
    }
    // separable box blur with clamped edges
    if (style.blur_radius > 0) {
        const int r = style.blur_radius;
        std::vector<double> tmp(lum.size());
        for (int row = 0; row < kCropH; ++row) {
            for (int col = 0; col < kCropW; ++col) {
                double acc = 0;
                for (int k = -r; k <= r; ++k)
                    acc += lum[static_cast<std::size_t>(row) * kCropW + std::clamp(col + k, 0, kCropW - 1)];
                tmp[static_cast<std::size_t>(row) * kCropW + col] = acc / (2 * r + 1);
            }
        }
        for (int col = 0; col < kCropW; ++col) {
            for (int row = 0; row < kCropH; ++row) {
                double acc = 0;
                for (int k = -r; k <= r; ++k)
                    acc += tmp[static_cast<std::size_t>(std::clamp(row + k, 0, kCropH - 1)) * kCropW + col];
                lum[static_cast<std::size_t>(row) * kCropW + col] = acc / (2 * r + 1);
            }
        }
    }
    if (style.noise_sigma > 0.0) {
        Rng noise(hash_mix(p.seed, 0x401));
        for (double& c : lum) c += style.noise_sigma * noise.normal();
    }

    RenderOutput out;
    out.image = Image(kCropW, kCropH, 1);
    for (std::size_t i = 0; i < lum.size(); ++i)
        out.image.px[i] = static_cast<std::uint8_t>(std::clamp(std::floor(lum[i] + 0.5), 0.0, 255.0));
    out.aperture_area = area;
    out.degree = p.openness;
    out.params = p;
    return out;
}

// Largest aperture this subject can produce (openness 100, neutral gaze and
// camera). The invariant tests compare rendered areas against this.
inline int subject_max_aperture(int subject_id) {
    SceneParams p;
    p.openness = 100.0;
    p.subject_id = subject_id;
    return render_eye_crop(p, DomainStyle::syn()).aperture_area;
}

// 0 iff fully closed; pseudo-real generation never produces (0,30), so the
// binary label is unambiguous w.r.t. the openness threshold.
inline int derive_binary_label(double degree) {
    if (degree > 0.0 && degree < 30.0)
        throw DataError("derive_binary_label: degree in (0,30) is outside the generation policy");
    return degree == 0.0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Dataset sampling over the acquisition grids: 11 openness states in 10%
// steps, 11x18 gaze stations (+-25 vertical, +-35 horizontal), 7x7 camera
// positions (+-30 in 10-degree steps), 13 subjects.

enum class Domain { Syn, Real, RealPrime };

struct GridSpec {
    enum class Openness { Grid11, Matched } openness = Openness::Grid11;

    static GridSpec defaults_for(Domain d) {
        GridSpec g;
        g.openness = (d == Domain::Syn) ? Openness::Grid11 : Openness::Matched;
        return g;
    }
};

namespace detail {

inline double draw_openness(GridSpec::Openness policy, int index, Rng& rng) {
    if (policy == GridSpec::Openness::Grid11) return 10.0 * (index % 11);
    // matched stratification over {0} u [30,100]: the closed atom plus seven
    // ten-degree bins, cycled by index
    const int bin = index % 8;
    if (bin == 0) return 0.0;
    const double lo = 30.0 + 10.0 * (bin - 1);
    return rng.uniform(lo, lo + 10.0);
}

inline double gaze_v_station(Rng& rng) { return -25.0 + 5.0 * static_cast<double>(rng.below(11)); }
inline double gaze_h_station(Rng& rng) {
    // 18 stations spanning +-35 degrees
    return -35.0 + 70.0 * static_cast<double>(rng.below(18)) / 17.0;
}
inline double cam_station(Rng& rng) { return -30.0 + 10.0 * static_cast<double>(rng.below(7)); }

}  // namespace detail

constexpr int kSubjectCount = 13;

// Renders `count` samples plus manifest.jsonl under out_dir. Per-sample seeds
// derive from (dataset_seed, index), so generation is order independent.
inline std::vector<SampleRecord> sample_dataset(Domain domain, int count, const GridSpec& grid,
                                                std::uint64_t dataset_seed,
                                                const std::filesystem::path& out_dir) {
    if (count < 1) throw ConfigError("sample_dataset: count must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("sample_dataset: cannot create '" + out_dir.string() + "'");

    const DomainStyle style = (domain == Domain::Syn) ? DomainStyle::syn() : DomainStyle::real();
    const char* prefix = (domain == Domain::Syn) ? "syn" : "real";

    std::vector<SampleRecord> records;
    records.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t sample_seed = hash_mix(dataset_seed, static_cast<std::uint64_t>(i));
        Rng rng(sample_seed);
        SceneParams p;
        p.openness = detail::draw_openness(grid.openness, i, rng);
        p.gaze_v = detail::gaze_v_station(rng);
        p.gaze_h = detail::gaze_h_station(rng);
        p.cam_pitch = detail::cam_station(rng);
        p.cam_yaw = detail::cam_station(rng);
        p.subject_id = static_cast<int>(rng.below(kSubjectCount));
        p.seed = sample_seed;

        auto rendered = render_eye_crop(p, style);
        char name[48];
        std::snprintf(name, sizeof(name), "%s_%05d.pgm", prefix, i);
        write_pgm(rendered.image, out_dir / name);

        SampleRecord r;
        r.path = name;
        r.domain = prefix;
        r.subject = p.subject_id;
        r.gaze_v = p.gaze_v;
        r.gaze_h = p.gaze_h;
        r.cam_pitch = p.cam_pitch;
        r.cam_yaw = p.cam_yaw;
        r.seed = sample_seed;
        if (domain == Domain::Syn) {
            r.label_kind = "degree";
            r.label = p.openness;
            r.openness_gt = p.openness;
        } else if (domain == Domain::RealPrime) {
            r.label_kind = "degree";  // the degree-annotated pseudo-real subset
            r.label = p.openness;
        } else {
            r.label_kind = "binary";
            r.label = derive_binary_label(p.openness);
        }
        records.push_back(std::move(r));
    }
    write_manifest(records, out_dir / "manifest.jsonl");
    return records;
}

// ---------------------------------------------------------------------------
// Slow-blink sequences

enum class BlinkPattern { CloseOpen, CloseOpenCloseOpen };

inline BlinkPattern blink_pattern_by_name(const std::string& name) {
    if (name == "close-open") return BlinkPattern::CloseOpen;
    if (name == "close-open-close-open") return BlinkPattern::CloseOpenCloseOpen;
    throw ConfigError("unknown blink pattern '" + name + "'");
}

// Piecewise-linear trajectory through the pattern's extrema, evenly sampled.
inline std::vector<double> blink_degrees(BlinkPattern pattern, int frames) {
    if (frames < 2) throw ConfigError("blink_degrees: frames must be >= 2");
    const std::vector<double> extrema = (pattern == BlinkPattern::CloseOpen)
                                            ? std::vector<double>{100, 0, 100}
                                            : std::vector<double>{100, 0, 100, 0, 100};
    const int segments = static_cast<int>(extrema.size()) - 1;
    std::vector<double> degrees(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i) {
        const double pos = static_cast<double>(i) / (frames - 1) * segments;
        int seg = std::min(static_cast<int>(pos), segments - 1);
        const double frac = pos - seg;
        degrees[static_cast<std::size_t>(i)] =
            extrema[static_cast<std::size_t>(seg)] +
            frac * (extrema[static_cast<std::size_t>(seg) + 1] - extrema[static_cast<std::size_t>(seg)]);
    }
    return degrees;
}

// Renders a blink sequence with fixed subject/gaze/camera; the manifest keeps
// exact degrees plus the frame index.
inline std::vector<SampleRecord> render_blink_sequence(int subject, BlinkPattern pattern, int frames,
                                                       const DomainStyle& style,
                                                       std::uint64_t dataset_seed,
                                                       const std::filesystem::path& out_dir) {
    if (frames < 8) throw ConfigError("render_blink_sequence: frames must be >= 8");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("render_blink_sequence: cannot create '" + out_dir.string() + "'");

    const auto degrees = blink_degrees(pattern, frames);
    std::vector<SampleRecord> records;
    records.reserve(degrees.size());
    for (int i = 0; i < frames; ++i) {
        const std::uint64_t sample_seed = hash_mix(dataset_seed, static_cast<std::uint64_t>(i));
        SceneParams p;
        p.openness = degrees[static_cast<std::size_t>(i)];
        p.subject_id = subject;
        p.seed = sample_seed;
        auto rendered = render_eye_crop(p, style);
        char name[48];
        std::snprintf(name, sizeof(name), "blink_%05d.pgm", i);
        write_pgm(rendered.image, out_dir / name);

        SampleRecord r;
        r.path = name;
        r.domain = "blink";
        r.label_kind = "degree";
        r.label = p.openness;
        r.subject = subject;
        r.openness_gt = p.openness;
        r.seed = sample_seed;
        r.frame_index = i;
        records.push_back(std::move(r));
    }
    write_manifest(records, out_dir / "manifest.jsonl");
    return records;
}

}  // namespace eyedeg
