#include "gsgen/workbench/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace gsgen {

namespace {

std::string location(const std::string& file, int line, int column) {
    if (line <= 0) return file;
    return file + ":" + std::to_string(line) + ":" + std::to_string(column);
}

const char* to_string(GuidanceMode m) { return m == GuidanceMode::Local ? "local" : "remote"; }

const char* to_string(DepthMode m) {
    switch (m) {
    case DepthMode::None: return "none";
    case DepthMode::Files: return "files";
    case DepthMode::Remote: return "remote";
    }
    return "none";
}

class Reader {
public:
    Reader(const std::string& file, YAML::Node node, std::string path)
        : file_(file), node_(std::move(node)), path_(std::move(path)) {
        if (!node_.IsMap()) throw error(node_, "expected a mapping" + where());
    }

    ConfigError error(const YAML::Node& n, const std::string& msg) const {
        const YAML::Mark m = n.Mark();
        return ConfigError(file_, m.line + 1, m.column + 1, msg);
    }

    template <class T>
    void field(const char* key, T& out) {
        used_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return;
        read(n, out, qualified(key));
    }

    template <class F>
    void section(const char* key, F&& fn) {
        used_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return;
        Reader sub(file_, n, qualified(key));
        fn(sub);
        sub.finish();
    }

    void finish() const {
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (!used_.count(key)) throw error(kv.first, "unknown key '" + key + "'" + where());
        }
    }

private:
    std::string where() const { return path_.empty() ? "" : " in '" + path_ + "'"; }
    std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    template <class T>
    T scalar(const YAML::Node& n, const std::string& name, const char* kind) const {
        if (!n.IsScalar()) throw error(n, "expected " + std::string(kind) + " for '" + name + "'");
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            throw error(n, "expected " + std::string(kind) + " for '" + name + "', got '" + n.Scalar() + "'");
        }
    }

    void read(const YAML::Node& n, double& out, const std::string& name) const { out = scalar<double>(n, name, "a number"); }
    void read(const YAML::Node& n, bool& out, const std::string& name) const { out = scalar<bool>(n, name, "true or false"); }
    void read(const YAML::Node& n, std::string& out, const std::string& name) const { out = scalar<std::string>(n, name, "a string"); }
    void read(const YAML::Node& n, std::filesystem::path& out, const std::string& name) const {
        out = scalar<std::string>(n, name, "a path");
    }
    void read(const YAML::Node& n, int& out, const std::string& name) const { out = scalar<int>(n, name, "an integer"); }
    void read(const YAML::Node& n, std::uint64_t& out, const std::string& name) const {
        const long long v = scalar<long long>(n, name, "a non-negative integer");
        if (v < 0) throw error(n, "'" + name + "' must be >= 0");
        out = static_cast<std::uint64_t>(v);
    }
    void read(const YAML::Node& n, std::optional<int>& out, const std::string& name) const {
        if (n.IsNull()) {
            out.reset();
            return;
        }
        int v = 0;
        read(n, v, name);
        out = v;
    }
    template <class T, std::size_t N>
    void read(const YAML::Node& n, std::array<T, N>& out, const std::string& name) const {
        if (!n.IsSequence() || n.size() != N) throw error(n, "expected a list of " + std::to_string(N) + " values for '" + name + "'");
        for (std::size_t i = 0; i < N; ++i) read(n[i], out[i], name);
    }
    void read(const YAML::Node& n, Vec3& out, const std::string& name) const {
        std::array<double, 3> a{};
        read(n, a, name);
        out = Vec3(a[0], a[1], a[2]);
    }
    void read(const YAML::Node& n, GuidanceMode& out, const std::string& name) const {
        const std::string s = scalar<std::string>(n, name, "a mode");
        if (s == "local") out = GuidanceMode::Local;
        else if (s == "remote") out = GuidanceMode::Remote;
        else throw error(n, "'" + name + "' must be local or remote, got '" + s + "'");
    }
    void read(const YAML::Node& n, DepthMode& out, const std::string& name) const {
        const std::string s = scalar<std::string>(n, name, "a mode");
        if (s == "none") out = DepthMode::None;
        else if (s == "files") out = DepthMode::Files;
        else if (s == "remote") out = DepthMode::Remote;
        else throw error(n, "'" + name + "' must be none, files or remote, got '" + s + "'");
    }
    void read(const YAML::Node& n, std::vector<DepthScale>& out, const std::string& name) const {
        if (!n.IsSequence()) throw error(n, "expected a list for '" + name + "'");
        out.clear();
        for (const auto& item : n) {
            Reader r(file_, item, name + "[]");
            DepthScale s;
            r.field("factor", s.factor);
            r.field("weight", s.weight);
            r.finish();
            out.push_back(s);
        }
    }
    void read(const YAML::Node& n, ViewSpec& out, const std::string& name) const {
        Reader r(file_, n, name);
        r.used_.insert("image");
        if (!n["image"]) throw error(n, "'" + name + "' needs an image");
        r.field("image", out.image);
        std::filesystem::path mask;
        r.field("mask", mask);
        if (!mask.empty()) out.mask = mask;
        r.field("azimuth", out.azimuth);
        r.field("elevation", out.elevation);
        r.field("radius", out.radius);
        r.field("fov", out.fov);
        r.finish();
    }
    void read(const YAML::Node& n, std::optional<ViewSpec>& out, const std::string& name) const {
        if (n.IsNull()) {
            out.reset();
            return;
        }
        ViewSpec v;
        read(n, v, name);
        out = v;
    }
    void read(const YAML::Node& n, std::vector<ViewSpec>& out, const std::string& name) const {
        if (!n.IsSequence()) throw error(n, "expected a list for '" + name + "'");
        out.clear();
        for (const auto& item : n) {
            ViewSpec v;
            read(item, v, name + "[]");
            out.push_back(v);
        }
    }

    const std::string& file_;
    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
};

class Writer {
public:
    explicit Writer(YAML::Emitter& out) : out_(out) {}

    template <class T>
    void field(const char* key, const T& value) {
        out_ << YAML::Key << key << YAML::Value;
        write(value);
    }

    template <class F>
    void section(const char* key, F&& fn) {
        out_ << YAML::Key << key << YAML::Value << YAML::BeginMap;
        fn(*this);
        out_ << YAML::EndMap;
    }

private:
    void write(double v) { out_ << v; }
    void write(bool v) { out_ << v; }
    void write(int v) { out_ << v; }
    void write(std::uint64_t v) { out_ << v; }
    void write(const std::string& v) { out_ << YAML::DoubleQuoted << v; }
    void write(const std::filesystem::path& v) { out_ << YAML::DoubleQuoted << v.string(); }
    void write(const std::optional<int>& v) {
        if (v) out_ << *v;
        else out_ << YAML::Null;
    }
    template <class T, std::size_t N>
    void write(const std::array<T, N>& a) {
        out_ << YAML::Flow << YAML::BeginSeq;
        for (const auto& x : a) out_ << x;
        out_ << YAML::EndSeq;
    }
    void write(const Vec3& v) { write(std::array<double, 3>{v.x(), v.y(), v.z()}); }
    void write(GuidanceMode m) { out_ << to_string(m); }
    void write(DepthMode m) { out_ << to_string(m); }
    void write(const std::vector<DepthScale>& scales) {
        out_ << YAML::BeginSeq;
        for (const auto& s : scales) {
            out_ << YAML::Flow << YAML::BeginMap << YAML::Key << "factor" << YAML::Value << s.factor << YAML::Key
                 << "weight" << YAML::Value << s.weight << YAML::EndMap;
        }
        out_ << YAML::EndSeq;
    }
    void write(const ViewSpec& v) {
        out_ << YAML::BeginMap;
        field("image", v.image);
        if (v.mask) field("mask", *v.mask);
        field("azimuth", v.azimuth);
        field("elevation", v.elevation);
        field("radius", v.radius);
        field("fov", v.fov);
        out_ << YAML::EndMap;
    }
    void write(const std::optional<ViewSpec>& v) {
        if (v) write(*v);
        else out_ << YAML::Null;
    }
    void write(const std::vector<ViewSpec>& views) {
        out_ << YAML::BeginSeq;
        for (const auto& v : views) write(v);
        out_ << YAML::EndSeq;
    }

    YAML::Emitter& out_;
};

// One field list drives both parsing and emission.
template <class V, class C>
void visit(V& v, C& c) {
    v.field("seed", c.seed);
    v.field("prompt", c.train.prompt);
    v.field("output", c.output);
    v.field("initial_primitives", c.initial_primitives);
    v.field("background", c.train.background);
    v.field("features", c.use_features);
    v.field("turntable_resolution", c.turntable_resolution);
    v.section("guidance", [&](V& s) {
        s.field("mode", c.guidance_mode);
        s.field("endpoint", c.guidance_endpoint.url);
        s.field("deadline_ms", c.guidance_endpoint.deadline_ms);
        s.field("references", c.references);
    });
    v.section("depth", [&](V& s) {
        s.field("mode", c.depth_mode);
        s.field("endpoint", c.depth_endpoint.url);
        s.field("deadline_ms", c.depth_endpoint.deadline_ms);
        s.field("maps", c.depth_maps);
    });
    v.field("holdout", c.holdout);
    auto& t = c.train;
    v.section("train", [&](V& s) {
        s.field("stage1_steps", t.stage1_steps);
        s.field("stage2_steps", t.stage2_steps);
        s.field("run_stage2", t.run_stage2);
        s.field("fixed_resolution", t.fixed_resolution);
        s.field("ramp_fractions", t.ramp.fractions);
        s.field("ramp_resolutions", t.ramp.resolutions);
        s.field("timestep_start", t.timestep_start);
        s.field("timestep_end", t.timestep_end);
        s.field("guidance_w", t.guidance_w);
        s.field("adam_beta1", t.adam_beta1);
        s.field("adam_beta2", t.adam_beta2);
    });
    v.section("cameras", [&](V& s) {
        s.field("azimuth_min", t.cameras.azimuth_min);
        s.field("azimuth_max", t.cameras.azimuth_max);
        s.field("elevation_min", t.cameras.elevation_min);
        s.field("elevation_max", t.cameras.elevation_max);
        s.field("radius", t.cameras.radius);
        s.field("fov", t.cameras.fov_y_deg);
        s.field("final_fixed_fraction", t.cameras.final_fixed_fraction);
    });
    v.section("lr", [&](V& s) {
        s.field("center", t.lr.center);
        s.field("center_final_factor", t.lr.center_final_factor);
        s.field("log_scale", t.lr.log_scale);
        s.field("rotation", t.lr.rotation);
        s.field("opacity", t.lr.opacity);
        s.field("color", t.lr.color);
        s.field("others_final_factor", t.lr.others_final_factor);
    });
    v.section("densify", [&](V& s) {
        s.field("interval", t.densify.interval);
        s.field("start_step", t.densify.start_step);
        s.field("stop_fraction", t.densify.stop_fraction);
        s.field("grad_threshold", t.densify.grad_threshold);
        s.field("split_extent_fraction", t.densify.split_extent_fraction);
        s.field("split_divisor", t.densify.split_divisor);
        s.field("prune_opacity", t.densify.prune_opacity);
        s.field("max_primitives", t.densify.max_primitives);
    });
    v.section("loss", [&](V& s) {
        s.field("depth_scale_weight", t.loss.depth_scale_weight);
        s.field("depth_multiscale_weight", t.loss.depth_multiscale_weight);
        s.field("depth_huber_weight", t.loss.depth_huber_weight);
        s.field("depth_scales", t.loss.depth_scales);
        s.field("huber_delta", t.loss.huber_delta);
        s.field("color_ssim_mix", t.loss.color_ssim_mix);
        s.field("guidance_weight", t.loss.guidance_weight);
        s.field("mask_weight", t.loss.mask_weight);
        s.field("feature_weight", t.loss.feature_weight);
        s.field("depth_weight", t.loss.depth_weight);
        s.field("color_weight", t.loss.color_weight);
        s.field("refine_weight", t.loss.refine_weight);
        s.field("valid_alpha_threshold", t.loss.valid_alpha_threshold);
    });
    v.section("texture", [&](V& s) {
        s.field("grid_resolution", t.texture.grid_resolution);
        s.field("iso_level", t.texture.iso_level);
        s.field("texture_size", t.texture.texture_size);
        s.field("bake_resolution", t.texture.bake_resolution);
        s.field("render_resolution", t.texture.render_resolution);
        s.field("noise_strength", t.texture.noise_strength);
        s.field("learning_rate", t.texture.learning_rate);
    });
}

} // namespace

ConfigError::ConfigError(const std::string& file, int line, int column, const std::string& message)
    : std::runtime_error(location(file, line, column) + ": " + message), line_(line), column_(column) {}

std::filesystem::path ProjectConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

void ProjectConfig::validate() const {
    const auto fail = [](const std::string& msg) { return ConfigError("config", 0, 0, msg); };
    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw fail(e.what());
    }
    if (initial_primitives < 1) throw fail("initial_primitives must be >= 1");
    if (turntable_resolution < 1) throw fail("turntable_resolution must be >= 1");
    if (guidance_mode == GuidanceMode::Local && references.empty()) throw fail("local guidance needs at least one reference view");
    if (guidance_mode == GuidanceMode::Remote && guidance_endpoint.url.empty()) throw fail("remote guidance needs guidance.endpoint");
    if (depth_mode == DepthMode::Files && depth_maps.empty()) throw fail("depth mode 'files' needs depth.maps");
    if (depth_mode == DepthMode::Remote && depth_endpoint.url.empty()) throw fail("remote depth needs depth.endpoint");
    if (guidance_endpoint.deadline_ms <= 0 || depth_endpoint.deadline_ms <= 0) throw fail("deadlines must be positive");
}

ProjectConfig parse_project_config(const std::string& yaml, const std::string& file_name,
                                   const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(file_name, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
    ProjectConfig config;
    config.base_dir = base_dir;
    if (root.IsNull()) return config;
    Reader reader(file_name, root, "");
    visit(reader, config);
    reader.finish();
    config.train.seed = config.seed;
    return config;
}

ProjectConfig load_project_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), 0, 0, "cannot open config file");
    std::stringstream text;
    text << in.rdbuf();
    return parse_project_config(text.str(), path.string(), path.parent_path().empty() ? "." : path.parent_path());
}

std::string emit_project_config(const ProjectConfig& config) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    Writer writer(out);
    visit(writer, config);
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace gsgen
