#include "gsgen/workbench/cli.hpp"

#include "gsgen/io/codec.hpp"
#include "gsgen/loss/metrics.hpp"
#include "gsgen/mesh/texture.hpp"
#include "gsgen/prompt/prompt_studio.hpp"
#include "gsgen/render/splat_renderer.hpp"
#include "gsgen/workbench/cloud_io.hpp"
#include "gsgen/workbench/config.hpp"
#include "gsgen/workbench/mesh_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>

namespace gsgen {

namespace fs = std::filesystem;

namespace {

/// Input problem that maps to kExitBadInput.
struct BadInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ImageBuffer to_rgb(const ImageBuffer& img) {
    if (img.channels() == 3) return img;
    ImageBuffer rgb(img.width(), img.height(), 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            rgb.set_rgb(x, y, img.channels() == 1 ? Vec3::Constant(img.at(x, y, 0))
                                                  : Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)));
        }
    }
    return rgb;
}

ImageBuffer channel(const ImageBuffer& img, int c) {
    ImageBuffer out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(x, y, c);
    }
    return out;
}

ImageBuffer read_input_png(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw BadInput(std::string("missing ") + what + ": " + path.string());
    try {
        return read_png(path);
    } catch (const std::runtime_error& e) {
        throw BadInput(std::string("cannot read ") + what + " " + path.string() + ": " + e.what());
    }
}

Camera view_camera(const ViewSpec& v, int width, int height) {
    return orbit_camera(v.azimuth, v.elevation, v.radius, width, height, v.fov);
}

ReferenceView load_reference(const ProjectConfig& config, const ViewSpec& spec) {
    const ImageBuffer raw = read_input_png(config.resolve(spec.image), "reference image");
    ReferenceView ref;
    ref.image = to_rgb(raw);
    ref.camera = view_camera(spec, raw.width(), raw.height());
    if (spec.mask) {
        const ImageBuffer m = read_input_png(config.resolve(*spec.mask), "reference mask");
        if (m.width() != raw.width() || m.height() != raw.height()) {
            throw BadInput("mask " + spec.mask->string() + " does not match its image size");
        }
        ref.mask = channel(m, m.channels() == 4 ? 3 : 0);
    } else if (raw.channels() == 4) {
        ref.mask = channel(raw, 3);
    }
    return ref;
}

void write_loss_log(const fs::path& path, const TrainResult& result) {
    std::ofstream csv(path);
    csv << "step,stage,resolution,primitives,guidance_skipped,guidance,scale,multiscale,huber,depth,mask,feature,"
           "color,refine,total\n";
    csv << std::setprecision(10);
    for (const auto& s : result.log) {
        const LossReport& r = s.report;
        csv << s.step << ',' << s.stage << ',' << s.resolution << ',' << s.primitives << ',' << (s.guidance_skipped ? 1 : 0)
            << ',' << r.guidance << ',' << r.scale << ',' << r.multiscale << ',' << r.huber << ',' << r.depth << ','
            << r.mask << ',' << r.feature << ',' << r.color << ',' << r.refine << ',' << r.total << '\n';
    }
    if (!csv) throw std::runtime_error("cannot write " + path.string());
}

HttpEndpoint endpoint(const EndpointSpec& spec) {
    return {spec.url, std::chrono::milliseconds(spec.deadline_ms), auth_token_from_env()};
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const BadInput& e) {
        err << "error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const CloudFormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const EmptyIsosurface& e) {
        err << "error: empty isosurface: " << e.what() << '\n';
        return kExitEmptyMesh;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace

GaussianCloud fixture_scene(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;
    GaussianCloud cloud;
    while (cloud.size() < 20) {
        const Vec3 c(u(rng), u(rng), u(rng));
        if (c.norm() > 1.0) continue;
        GaussianPrimitive p;
        p.center = 0.55 * c;
        for (int k = 0; k < 3; ++k) p.log_scale[k] = std::log(0.07 + 0.1 * unit(rng));
        p.rotation = Quat(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
        p.opacity_logit = logit(0.75 + 0.2 * unit(rng));
        p.color = Vec3(0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng));
        cloud.primitives.push_back(p);
    }
    return cloud;
}

ImageBuffer turntable(const GaussianCloud& cloud, int resolution, const Vec3& background) {
    ImageBuffer strip(8 * resolution, resolution, 3);
    for (int f = 0; f < 8; ++f) {
        const Camera cam = orbit_camera(-180.0 + 45.0 * f, 0.0, kDefaultOrbitRadius, resolution, resolution);
        const ImageBuffer frame = render(cloud, cam, background).color.clamped();
        for (int y = 0; y < resolution; ++y) {
            for (int x = 0; x < resolution; ++x) strip.set_rgb(f * resolution + x, y, frame.rgb(x, y));
        }
    }
    return strip;
}

int cli_fit(const FitOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        ProjectConfig config = load_project_config(options.config);
        if (options.seed) {
            config.seed = *options.seed;
            config.train.seed = *options.seed;
        }
        if (options.guidance) {
            if (*options.guidance == "local") config.guidance_mode = GuidanceMode::Local;
            else if (*options.guidance == "remote") config.guidance_mode = GuidanceMode::Remote;
            else throw BadInput("--guidance must be local or remote");
        }
        if (options.endpoint) config.guidance_endpoint.url = *options.endpoint;
        config.validate();

        std::vector<ReferenceView> refs;
        for (const auto& spec : config.references) refs.push_back(load_reference(config, spec));

        std::unique_ptr<GuidanceProvider> guidance;
        std::unique_ptr<Denoiser> denoiser;
        if (config.guidance_mode == GuidanceMode::Local) {
            guidance = std::make_unique<ReferenceGuidance>(refs);
            denoiser = std::make_unique<ReferenceBlendDenoiser>(refs);
        } else {
            guidance = std::make_unique<RemoteGuidance>(endpoint(config.guidance_endpoint));
            denoiser = std::make_unique<RemoteDenoiser>(endpoint(config.guidance_endpoint));
        }

        std::unique_ptr<DepthPriorProvider> depth;
        if (config.depth_mode == DepthMode::Files) {
            std::vector<DepthMapView> maps;
            for (const auto& spec : config.depth_maps) {
                const fs::path p = config.resolve(spec.image);
                if (!fs::exists(p)) throw BadInput("missing depth map: " + p.string());
                ImageBuffer d;
                try {
                    d = read_depth_map(p);
                } catch (const std::runtime_error& e) {
                    throw BadInput("cannot read depth map " + p.string() + ": " + e.what());
                }
                maps.push_back({view_camera(spec, d.width(), d.height()), d});
            }
            depth = std::make_unique<FileDepthPrior>(std::move(maps));
        } else if (config.depth_mode == DepthMode::Remote) {
            depth = std::make_unique<RemoteDepthPrior>(endpoint(config.depth_endpoint));
        }

        std::optional<ReferenceView> holdout;
        if (config.holdout) holdout = load_reference(config, *config.holdout);

        PatchStatsExtractor features;
        TrainProviders providers;
        providers.guidance = guidance.get();
        providers.depth = depth.get();
        providers.features = config.use_features ? &features : nullptr;
        providers.denoiser = denoiser.get();

        const GaussianCloud initial = init_cloud(config.initial_primitives, config.seed);
        const TrainResult result = train(initial, config.train, providers);

        const fs::path dir = config.resolve(config.output);
        fs::create_directories(dir);
        save_cloud(dir / "cloud.gsc", result.cloud);
        write_loss_log(dir / "loss_log.csv", result);
        write_png(dir / "turntable.png", turntable(result.cloud, config.turntable_resolution, config.train.background));
        if (result.mesh) write_textured_obj(dir / "mesh", "mesh", *result.mesh);

        YAML::Node log;
        log["config"] = YAML::Load(emit_project_config(config));
        YAML::Node summary;
        summary["steps"] = static_cast<int>(result.log.size());
        summary["primitives"] = static_cast<unsigned long long>(result.cloud.size());
        summary["densify_steps"] = result.densify_steps;
        summary["aborted"] = result.aborted;
        if (result.aborted) summary["abort_reason"] = result.abort_reason;
        if (!result.log.empty()) summary["final_total_loss"] = result.log.back().report.total;
        if (holdout) {
            const ImageBuffer fit = render(result.cloud, holdout->camera, config.train.background).color;
            const double p = psnr(fit.clamped(), holdout->image);
            const double s = ssim(fit.clamped(), holdout->image);
            summary["holdout_psnr"] = p;
            summary["holdout_ssim"] = s;
            out << "holdout PSNR " << fmt2(p) << " dB, SSIM " << fmt4(s) << '\n';
        }
        log["result"] = summary;
        std::ofstream(dir / "run_log.yaml") << YAML::Dump(log) << '\n';

        out << "wrote " << result.cloud.size() << " primitives to " << (dir / "cloud.gsc").string() << '\n';
        if (result.aborted) {
            err << "error: run aborted: " << result.abort_reason << '\n';
            return result.abort_reason.rfind("empty isosurface", 0) == 0 ? int(kExitEmptyMesh) : int(kExitFailure);
        }
        return int(kExitOk);
    });
}

int cli_mesh(const MeshOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (!(options.iso > 0.0)) throw BadInput("--iso must be > 0");
        if (options.grid < 2) throw BadInput("--grid must be >= 2");
        if (!fs::exists(options.cloud)) throw BadInput("missing cloud file: " + options.cloud.string());
        const GaussianCloud cloud = load_cloud(options.cloud);
        if (cloud.empty()) throw EmptyIsosurface("cloud has no primitives");
        TextureStageConfig tc;
        tc.grid_resolution = options.grid;
        tc.iso_level = options.iso;
        tc.texture_size = options.texture_size;
        tc.bake_resolution = options.bake_resolution;
        const TexturedMesh mesh = extract_textured_mesh(cloud, tc, Vec3::Zero());
        const MeshFiles files = write_textured_obj(options.output, "mesh", mesh);
        const TriangleMesh geo = mesh.geometry();
        out << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces, volume "
            << fmt4(signed_volume(geo)) << '\n';
        out << "wrote " << files.obj.string() << ", " << files.mtl.string() << ", " << files.texture.string() << '\n';
        return int(kExitOk);
    });
}

int cli_metrics(const fs::path& a, const fs::path& b, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ImageBuffer ia = to_rgb(read_input_png(a, "image"));
        const ImageBuffer ib = to_rgb(read_input_png(b, "image"));
        if (!ia.same_shape(ib)) {
            throw BadInput("image sizes differ: " + std::to_string(ia.width()) + "x" + std::to_string(ia.height()) + " vs " +
                           std::to_string(ib.width()) + "x" + std::to_string(ib.height()));
        }
        out << "PSNR " << fmt2(psnr(ia, ib)) << '\n';
        out << "SSIM " << fmt4(ssim(ia, ib)) << '\n';
        out << "LPIPS not computed (needs pretrained network weights)\n";
        return int(kExitOk);
    });
}

int cli_prompt(const PromptOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        UserRequest request;
        request.text = options.text;
        request.rounds = options.rounds;
        request.candidates = options.candidates;
        for (const auto& c : options.conditions) {
            const auto eq = c.find('=');
            if (eq == std::string::npos) throw BadInput("--condition expects kind=path, got '" + c + "'");
            ConditionAttachment att;
            try {
                att.kind = parse_condition_kind(c.substr(0, eq));
            } catch (const std::invalid_argument& e) {
                throw BadInput(e.what());
            }
            att.image = read_input_png(c.substr(eq + 1), "condition image");
            request.conditions.push_back(std::move(att));
        }
        try {
            request.validate();
        } catch (const std::invalid_argument& e) {
            throw BadInput(e.what());
        }

        const auto ep = [&](const std::string& url) {
            return HttpEndpoint{url, std::chrono::milliseconds(options.deadline_ms), auth_token_from_env()};
        };
        TemplateLlm mock_llm;
        ProceduralT2i mock_t2i;
        HeuristicEvaluator mock_eval;
        std::unique_ptr<LlmClient> http_llm;
        std::unique_ptr<T2iClient> http_t2i;
        std::unique_ptr<EvaluatorClient> http_eval;
        PromptClients clients{&mock_llm, &mock_t2i, &mock_eval};
        if (options.llm_endpoint) clients.llm = (http_llm = std::make_unique<HttpLlmClient>(ep(*options.llm_endpoint))).get();
        if (options.t2i_endpoint) clients.t2i = (http_t2i = std::make_unique<HttpT2iClient>(ep(*options.t2i_endpoint))).get();
        if (options.evaluator_endpoint) {
            clients.evaluator = (http_eval = std::make_unique<HttpEvaluatorClient>(ep(*options.evaluator_endpoint))).get();
        }

        const OptimizationTranscript t = optimize(request, clients, {options.early_stop, options.seed});

        fs::create_directories(options.output / "candidates");
        nlohmann::json doc;
        doc["request"] = {{"text", request.text}, {"rounds", request.rounds}, {"candidates", request.candidates}};
        nlohmann::json conds = nlohmann::json::array();
        for (const auto& c : request.conditions) conds.push_back(to_string(c.kind));
        doc["request"]["conditions"] = conds;
        nlohmann::json records = nlohmann::json::array();
        for (std::size_t i = 0; i < t.candidates.size(); ++i) {
            const auto& c = t.candidates[i];
            const std::string name = "candidates/r" + std::to_string(c.round + 1) + "_" + std::to_string(i) + ".png";
            write_png(options.output / name, c.image);
            records.push_back({{"round", c.round + 1}, {"prompt", c.prompt}, {"score", c.score}, {"critique", c.critique},
                               {"selected", c.selected}, {"image", name}});
        }
        doc["candidates"] = records;
        doc["reflections"] = t.reflections;
        doc["rounds_run"] = t.rounds_run;
        doc["t2i_calls"] = t.t2i_calls;
        if (!t.failure.empty()) doc["failure"] = t.failure;
        if (t.best) {
            const auto& best = t.best_record();
            doc["best"] = {{"prompt", best.prompt}, {"score", best.score}, {"image", "best.png"}};
            write_png(options.output / "best.png", best.image);
            out << "best (" << fmt2(best.score) << "): " << best.prompt << '\n';
        }
        std::ofstream(options.output / "transcript.json") << doc.dump(2) << '\n';
        if (!t.failure.empty()) err << "warning: " << t.failure << '\n';
        return t.best ? int(kExitOk) : int(kExitFailure);
    });
}

int cli_fixture(const FixtureOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (options.resolution < 8) throw BadInput("--resolution must be >= 8");
        if (options.steps < 1) throw BadInput("--steps must be >= 1");
        const fs::path& dir = options.output;
        fs::create_directories(dir / "refs");
        fs::create_directories(dir / "depth");
        const GaussianCloud truth = fixture_scene(options.seed);
        save_cloud(dir / "truth.gsc", truth);

        ProjectConfig config;
        config.seed = options.seed;
        config.train.seed = options.seed;
        config.train.prompt = "fixture";
        config.output = "out";
        config.depth_mode = DepthMode::Files;
        const int r = options.resolution;
        for (int i = 0; i < 8; ++i) {
            ViewSpec view;
            view.azimuth = wrap_degrees(45.0 * i);
            view.elevation = i % 2 == 0 ? 15.0 : -15.0;
            const Camera cam = view_camera(view, r, r);
            const RenderOutput img = render(truth, cam, Vec3::Zero());
            const std::string n = std::to_string(i);
            write_png(dir / "refs" / ("view" + n + ".png"), img.color.clamped());
            write_png(dir / "refs" / ("mask" + n + ".png"), img.alpha.clamped());
            write_depth_map(dir / "depth" / ("view" + n + ".png"), img.depth);
            view.image = "refs/view" + n + ".png";
            view.mask = "refs/mask" + n + ".png";
            config.references.push_back(view);
            ViewSpec d = view;
            d.image = "depth/view" + n + ".png";
            d.mask.reset();
            config.depth_maps.push_back(d);
        }
        ViewSpec hold;
        hold.azimuth = 22.5;
        hold.image = "holdout.png";
        write_png(dir / hold.image, render(truth, view_camera(hold, r, r), Vec3::Zero()).color.clamped());
        config.holdout = hold;

        TrainConfig& t = config.train;
        t.stage1_steps = options.steps;
        t.run_stage2 = options.stage2;
        t.stage2_steps = 20;
        t.fixed_resolution = r;
        t.cameras.elevation_min = -20.0;
        t.cameras.elevation_max = 20.0;
        t.lr.center = 1e-2;
        t.lr.center_final_factor = 0.05;
        t.lr.log_scale = 1e-2;
        t.lr.rotation = 1e-2;
        t.lr.opacity = 5e-2;
        t.lr.color = 1e-2;
        t.lr.others_final_factor = 0.1;
        t.densify.interval = 100;
        t.densify.start_step = 100;
        t.densify.stop_fraction = 0.5;
        t.texture.grid_resolution = 48;
        t.texture.texture_size = 128;
        t.texture.bake_resolution = 96;
        t.texture.render_resolution = r;
        config.turntable_resolution = r;

        std::ofstream(dir / "config.yaml") << emit_project_config(config);
        out << "wrote fixture to " << dir.string() << " (fit with: gsgen fit --config " << (dir / "config.yaml").string()
            << ")\n";
        return int(kExitOk);
    });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gaussian splatting 3D asset generation toolkit", "gsgen"};
    app.require_subcommand(1);

    FitOptions fit;
    std::uint64_t seed = 0;
    std::string guidance_mode, endpoint_url;
    auto* fit_cmd = app.add_subcommand("fit", "optimize a cloud (and optionally a textured mesh) from a project config");
    fit_cmd->add_option("--config", fit.config, "project YAML file")->required();
    auto* seed_opt = fit_cmd->add_option("--seed", seed, "override the config seed");
    auto* guidance_opt = fit_cmd->add_option("--guidance", guidance_mode, "local or remote");
    auto* endpoint_opt = fit_cmd->add_option("--endpoint", endpoint_url, "guidance service URL");

    MeshOptions mesh;
    auto* mesh_cmd = app.add_subcommand("mesh", "extract and bake a textured mesh from a cloud file");
    mesh_cmd->add_option("--cloud", mesh.cloud, "cloud file")->required();
    mesh_cmd->add_option("--out", mesh.output, "output directory");
    mesh_cmd->add_option("--iso", mesh.iso, "iso level as a fraction of the peak density");
    mesh_cmd->add_option("--grid", mesh.grid, "density grid resolution per axis");
    mesh_cmd->add_option("--texture", mesh.texture_size, "texture size in texels");
    mesh_cmd->add_option("--bake-resolution", mesh.bake_resolution, "render size of the baking views");

    std::string image_a, image_b;
    auto* metrics_cmd = app.add_subcommand("metrics", "PSNR and SSIM between two PNG files");
    metrics_cmd->add_option("a", image_a)->required();
    metrics_cmd->add_option("b", image_b)->required();

    PromptOptions prompt;
    std::string llm_url, t2i_url, eval_url;
    auto* prompt_cmd = app.add_subcommand("prompt", "iterative prompt optimization");
    prompt_cmd->add_option("--text", prompt.text, "user request")->required();
    prompt_cmd->add_option("--condition", prompt.conditions, "kind=path, kind in style|edge|scribble|pose");
    prompt_cmd->add_option("--rounds", prompt.rounds, "maximum rounds");
    prompt_cmd->add_option("--n", prompt.candidates, "candidates per round");
    prompt_cmd->add_option("--early-stop", prompt.early_stop, "stop once a round's best reaches this score");
    prompt_cmd->add_option("--seed", prompt.seed);
    prompt_cmd->add_option("--out", prompt.output, "output directory");
    auto* llm_opt = prompt_cmd->add_option("--llm", llm_url, "prompt-writer service URL (mock when absent)");
    auto* t2i_opt = prompt_cmd->add_option("--t2i", t2i_url, "text-to-image service URL (mock when absent)");
    auto* eval_opt = prompt_cmd->add_option("--evaluator", eval_url, "evaluator service URL (mock when absent)");
    prompt_cmd->add_option("--deadline-ms", prompt.deadline_ms);

    FixtureOptions fixture;
    auto* fixture_cmd = app.add_subcommand("fixture", "write a synthetic project that fits offline");
    fixture_cmd->add_option("--out", fixture.output, "output directory");
    fixture_cmd->add_option("--seed", fixture.seed);
    fixture_cmd->add_option("--resolution", fixture.resolution);
    fixture_cmd->add_option("--steps", fixture.steps);
    fixture_cmd->add_flag("--stage2", fixture.stage2, "also run mesh extraction and texture refinement");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitBadInput;
    }

    if (*fit_cmd) {
        if (*seed_opt) fit.seed = seed;
        if (*guidance_opt) fit.guidance = guidance_mode;
        if (*endpoint_opt) fit.endpoint = endpoint_url;
        return cli_fit(fit, out, err);
    }
    if (*mesh_cmd) return cli_mesh(mesh, out, err);
    if (*metrics_cmd) return cli_metrics(image_a, image_b, out, err);
    if (*prompt_cmd) {
        if (*llm_opt) prompt.llm_endpoint = llm_url;
        if (*t2i_opt) prompt.t2i_endpoint = t2i_url;
        if (*eval_opt) prompt.evaluator_endpoint = eval_url;
        return cli_prompt(prompt, out, err);
    }
    return cli_fixture(fixture, out, err);
}

} // namespace gsgen
