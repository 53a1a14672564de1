#include "stsurro/synthetic.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "stsurro/errors.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.grid = make_grid(-32.0, 0.0, 0.0, 16.0, 0.25, 4);
    spec.box = default_input_box();
    return spec;
}

double synthetic_progress(double h, double v, double t) { return v * t / h; }

bool synthetic_breaks(const SyntheticSpec& spec, double h, double v) {
    int t_last = spec.rule.n_steps(h, v) - 1;
    return synthetic_progress(h, v, t_last) > spec.break_threshold;
}

Outcome synthetic_outcome(const SyntheticSpec& spec, double h, double v) {
    int t_last = spec.rule.n_steps(h, v) - 1;
    double p = synthetic_progress(h, v, t_last);
    if (p > spec.break_threshold + spec.almost_margin) return Outcome::break_;
    if (p >= spec.break_threshold - spec.almost_margin) return Outcome::almost_break;
    return Outcome::no_break;
}

namespace {

double ramp(double x, double width) {
    return std::clamp(x / width, 0.0, 1.0);
}

struct FieldShape {
    double plate_left, plate_right, plate_bottom;
    double jet_tip, jet_height;
    double bump_x, bump_y;
};

FieldShape shape_at(const SyntheticSpec& spec, double h, double v, double r, double t) {
    FieldShape s;
    double p = synthetic_progress(h, v, t);
    s.plate_right = spec.plate_x0 + spec.plate_speed * p;
    s.plate_left = s.plate_right - spec.plate_thickness;
    s.plate_bottom = std::min(4.0, spec.detach_gain * std::max(0.0, p - spec.break_threshold));
    s.jet_tip = spec.grid.x_min + v * t;
    s.jet_height = 2.0 * r;
    s.bump_x = spec.grid.x_min + 4.0 + 8.0 * p;
    s.bump_y = 3.0 + 16.0 * (r - 0.125);
    return s;
}

// Aligned-frame recipe: plate slab + advancing jet strip + smooth background
// with a drifting bump, near-vacuum behind the plate.
double field_value(const SyntheticSpec& spec, const FieldShape& s, double v, double x, double y,
                   Variable variable) {
    const double w = spec.ramp_width;
    double plate = spec.plate_value * ramp(x - s.plate_left, w) * ramp(s.plate_right - x, w) *
                   ramp(y - s.plate_bottom, w) * ramp(spec.plate_height - y, w);
    double jet = spec.jet_value * ramp(s.jet_tip - x, w) * ramp(s.jet_height - y, w);
    double left = ramp(s.plate_left - x, w);
    double dx = x - s.bump_x, dy = y - s.bump_y;
    double bump = 1.5 * std::exp(-(dx * dx + dy * dy) / 18.0);
    switch (variable) {
        case Variable::mass:
            return spec.background * left + bump * left + plate + jet;
        case Variable::x_momentum:
            return v * jet + 0.4 * v * bump * left;
        case Variable::y_momentum:
            return 0.2 * bump * left * (y / 10.0);
    }
    return 0;
}

uint64_t field_seed(const SyntheticSpec& spec, double h, double v, double r, int t) {
    uint64_t bits[3];
    std::memcpy(&bits[0], &h, 8);
    std::memcpy(&bits[1], &v, 8);
    std::memcpy(&bits[2], &r, 8);
    uint64_t s = fnv1a(bits, sizeof(bits), spec.seed ^ 0x73796e74ULL);
    return mix_seed(s, static_cast<uint64_t>(t));
}

}  // namespace

RawField generate_field(const SyntheticSpec& spec, double h, double v, double r, int t,
                        Variable variable) {
    if (t >= spec.rule.n_steps(h, v))
        throw IndexOutOfRangeError("timestep beyond the member's run length");
    FieldShape s = shape_at(spec, h, v, r, t);

    // Raw domain: length grows with h; rightmost sample column sits exactly
    // at x = length, so alignment shifts the field into the recipe frame.
    const double span = spec.grid.x_max - spec.grid.x_min;
    const double length = span + 0.4 * (h - spec.box.axes[0].lo);
    const double delta = spec.grid.delta;
    const int n_cols = static_cast<int>(std::floor(length / delta)) + 2;

    uint64_t noise_state = field_seed(spec, h, v, r, t);
    RawField raw;
    raw.variable = variable;
    raw.timestep = t;
    raw.points.reserve(static_cast<size_t>(n_cols) * static_cast<size_t>(spec.grid.ny));
    for (Index j = 0; j < spec.grid.ny; ++j) {
        const double y = spec.grid.cell_y(j);
        for (int i = 0; i < n_cols; ++i) {
            const double x_raw = length - i * delta;
            const double x = x_raw - length;  // aligned frame
            double value = field_value(spec, s, v, x, y, variable);
            if (spec.noise > 0) {
                double u = static_cast<double>(splitmix64(noise_state) >> 11) * 0x1.0p-53;
                value += spec.noise * (u - 0.5);
            }
            raw.points.push_back({x_raw, y, value});
        }
    }
    return raw;
}

Eigen::VectorXd synthetic_truth(const SyntheticSpec& spec, double h, double v, double r, int t,
                                Variable variable) {
    FieldShape s = shape_at(spec, h, v, r, t);
    Eigen::VectorXd out(spec.grid.size());
    for (Index j = 0; j < spec.grid.ny; ++j)
        for (Index i = 0; i < spec.grid.nx; ++i)
            out[spec.grid.natural_index(i, j)] =
                field_value(spec, s, v, spec.grid.cell_x(i), spec.grid.cell_y(j), variable);
    return out;
}

SimulationMeta make_member(const SyntheticSpec& spec, const std::string& key, double h, double v,
                           double r) {
    SimulationMeta m;
    m.key = key;
    m.he_length = h;
    m.tip_velocity = v;
    m.radius = r;
    m.n_timesteps = spec.rule.n_steps(h, v);
    m.outcome = synthetic_outcome(spec, h, v);
    return m;
}

void generate_ensemble(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    std::ofstream manifest(out_dir / "members.tsv");
    if (!manifest) throw IoError("cannot write " + (out_dir / "members.tsv").string());
    manifest << "# key\the_length\ttip_velocity\tradius\tn_timesteps\toutcome\n";
    manifest << "# rule.divisor = " << format_double(spec.rule.divisor) << "\n";
    manifest << "# rule.base = " << spec.rule.base << "\n";
    for (const auto& m : spec.members)
        manifest << m.key << "\t" << format_double(m.he_length) << "\t"
                 << format_double(m.tip_velocity) << "\t" << format_double(m.radius) << "\t"
                 << m.n_timesteps << "\t" << outcome_name(m.outcome) << "\n";
    manifest.close();
    if (!manifest) throw IoError("short write of ensemble manifest");

    for (const auto& m : spec.members) {
        auto member_dir = out_dir / m.key;
        std::filesystem::create_directories(member_dir, ec);
        for (int t = 0; t < m.n_timesteps; ++t) {
            RawField mass = generate_field(spec, m.he_length, m.tip_velocity, m.radius, t,
                                           Variable::mass);
            RawField xmom = generate_field(spec, m.he_length, m.tip_velocity, m.radius, t,
                                           Variable::x_momentum);
            RawField ymom = generate_field(spec, m.he_length, m.tip_velocity, m.radius, t,
                                           Variable::y_momentum);
            char name[32];
            std::snprintf(name, sizeof(name), "t%04d.tsv", t);
            std::ofstream os(member_dir / name);
            if (!os) throw IoError("cannot write " + (member_dir / name).string());
            os << "# sim_key = " << m.key << "\n";
            os << "# timestep = " << t << "\n";
            os << "# columns: x y mass x_momentum y_momentum\n";
            for (size_t i = 0; i < mass.points.size(); ++i) {
                const auto& p = mass.points[i];
                os << format_double(p.x) << "\t" << format_double(p.y) << "\t"
                   << format_double(p.value) << "\t" << format_double(xmom.points[i].value)
                   << "\t" << format_double(ymom.points[i].value) << "\n";
            }
            if (!os) throw IoError("short write of " + (member_dir / name).string());
        }
    }
}

}  // namespace stsurro
