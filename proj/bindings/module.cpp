// Python bindings for the main pipeline operations.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tadml/trainer.hpp"

namespace py = pybind11;
using namespace tadml;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
    std::copy(a.data(), a.data() + a.size(), t.values().begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> a({t.rows(), t.cols()});
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

py::dict det_to_dict(const Detection& d) {
    py::dict out;
    out["start"] = d.segment.start;
    out["end"] = d.segment.end;
    out["class"] = d.class_id;
    out["score"] = d.score;
    return out;
}

Detection det_from_dict(const py::dict& d) {
    return {{d["start"].cast<double>(), d["end"].cast<double>()},
            d["class"].cast<int>(), d["score"].cast<double>()};
}

GroundTruthInstance gt_from_dict(const py::dict& d) {
    return {{d["start"].cast<double>(), d["end"].cast<double>()}, d["class"].cast<int>()};
}

SynthConfig synth_config_from_dict(const py::dict& d) {
    SynthConfig cfg;
    if (d.contains("num_videos")) cfg.num_videos = d["num_videos"].cast<std::size_t>();
    if (d.contains("T")) cfg.T = d["T"].cast<std::size_t>();
    if (d.contains("D")) cfg.D = d["D"].cast<std::size_t>();
    if (d.contains("num_classes")) cfg.num_classes = d["num_classes"].cast<std::size_t>();
    if (d.contains("actions_min")) cfg.actions_min = d["actions_min"].cast<std::size_t>();
    if (d.contains("actions_max")) cfg.actions_max = d["actions_max"].cast<std::size_t>();
    if (d.contains("min_action_len")) cfg.min_action_len = d["min_action_len"].cast<std::size_t>();
    if (d.contains("max_action_len")) cfg.max_action_len = d["max_action_len"].cast<std::size_t>();
    if (d.contains("noise_level")) cfg.noise_level = d["noise_level"].cast<double>();
    if (d.contains("seed")) cfg.seed = d["seed"].cast<std::uint64_t>();
    return cfg;
}

TrainConfig train_config_from_dict(const py::dict& d) {
    TrainConfig cfg;
    if (d.contains("epochs")) cfg.epochs = d["epochs"].cast<std::size_t>();
    if (d.contains("batch_size")) cfg.batch_size = d["batch_size"].cast<std::size_t>();
    if (d.contains("base_lr")) cfg.base_lr = d["base_lr"].cast<double>();
    if (d.contains("warmup_epochs")) cfg.warmup_epochs = d["warmup_epochs"].cast<std::size_t>();
    if (d.contains("seed")) cfg.seed = d["seed"].cast<std::uint64_t>();
    if (d.contains("lambda_cls")) cfg.lambda_cls = d["lambda_cls"].cast<double>();
    if (d.contains("lambda_reg")) cfg.lambda_reg = d["lambda_reg"].cast<double>();
    if (d.contains("beta")) cfg.beta = d["beta"].cast<double>();
    if (d.contains("max_len")) cfg.max_len = d["max_len"].cast<std::size_t>();
    if (d.contains("input_dim")) cfg.model.input_dim = d["input_dim"].cast<std::size_t>();
    if (d.contains("width")) cfg.model.width = d["width"].cast<std::size_t>();
    if (d.contains("num_levels")) cfg.model.num_levels = d["num_levels"].cast<std::size_t>();
    if (d.contains("neck_stages")) cfg.model.neck_stages = d["neck_stages"].cast<std::size_t>();
    if (d.contains("num_classes")) cfg.model.num_classes = d["num_classes"].cast<std::size_t>();
    if (d.contains("residual")) cfg.model.residual = d["residual"].cast<bool>();
    if (d.contains("eq1_literal")) cfg.model.eq1_literal = d["eq1_literal"].cast<bool>();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_tadml, m) {
    m.doc() = "Anchor-free temporal action detection with Mechanics-MLP blocks";

    m.def("mechanics_mix",
          [](py::array_t<double> x, py::array_t<double> wa, py::array_t<double> ba,
             py::array_t<double> wb, py::array_t<double> bb, py::array_t<double> theta,
             bool eq1_literal) {
              MechanicsParams p;
              Tensor xt = tensor_from_array(x);
              p.Wa = tensor_from_array(wa);
              p.Wb = tensor_from_array(wb);
              auto vec1d = [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
                  Tensor t({static_cast<std::size_t>(a.size())});
                  std::copy(a.data(), a.data() + a.size(), t.values().begin());
                  return t;
              };
              p.ba = vec1d(ba);
              p.bb = vec1d(bb);
              p.theta = vec1d(theta);
              return array_from_tensor(mechanics_mix(nullptr, xt, p, eq1_literal));
          },
          py::arg("x"), py::arg("wa"), py::arg("ba"), py::arg("wb"), py::arg("bb"),
          py::arg("theta"), py::arg("eq1_literal") = false);

    m.def("tiou", [](double a0, double a1, double b0, double b1) {
        return tiou({a0, a1}, {b0, b1});
    });

    m.def("beta_giou_loss", [](double a0, double a1, double b0, double b1, double beta) {
        return beta_giou_loss({a0, a1}, {b0, b1}, beta);
    }, py::arg("pred_start"), py::arg("pred_end"), py::arg("gt_start"), py::arg("gt_end"),
       py::arg("beta") = 3.0);

    m.def("soft_nms", [](const std::vector<py::dict>& dets, double sigma, double final_threshold) {
        std::vector<Detection> in;
        in.reserve(dets.size());
        for (const auto& d : dets) in.push_back(det_from_dict(d));
        auto out = soft_nms(std::move(in), {sigma, final_threshold});
        std::vector<py::dict> res;
        res.reserve(out.size());
        for (const auto& d : out) res.push_back(det_to_dict(d));
        return res;
    }, py::arg("detections"), py::arg("sigma") = 0.5, py::arg("final_threshold") = 0.001);

    m.def("synth_dataset", [](const py::dict& cfg) {
        auto videos = synth_dataset(synth_config_from_dict(cfg));
        py::list out;
        for (const auto& v : videos) {
            py::list gts;
            for (const auto& g : v.gts) {
                py::dict gd;
                gd["start"] = g.segment.start;
                gd["end"] = g.segment.end;
                gd["class"] = g.class_id;
                gts.append(gd);
            }
            out.append(py::make_tuple(v.features.video_id,
                                      array_from_tensor(v.features.features), gts));
        }
        return out;
    });

    m.def("train", [](const py::dict& cfg, const py::list& dataset,
                      const std::optional<std::string>& out_dir) {
        Dataset data;
        for (auto item : dataset) {
            auto tup = item.cast<py::tuple>();
            SynthVideo v;
            v.features.video_id = tup[0].cast<std::string>();
            v.features.features = tensor_from_array(tup[1].cast<py::array_t<double>>());
            for (auto g : tup[2].cast<py::list>())
                v.gts.push_back(gt_from_dict(g.cast<py::dict>()));
            data.push_back(std::move(v));
        }
        TrainResult res = train(train_config_from_dict(cfg), data, out_dir);
        py::list log;
        for (const auto& e : res.log) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["total"] = e.total;
            d["cls"] = e.cls;
            d["reg"] = e.reg;
            d["lr"] = e.lr;
            log.append(d);
        }
        py::dict out;
        out["log"] = log;
        out["aborted_nan"] = res.aborted_nan;
        return out;
    }, py::arg("config"), py::arg("dataset"), py::arg("out_dir") = std::nullopt);

    m.def("infer", [](const std::string& ckpt_path, py::array_t<double> features) {
        Model model = load_checkpoint(ckpt_path);
        FeatureSequence seq;
        seq.video_id = "input";
        seq.features = tensor_from_array(features);
        InferResult r = infer(model, seq);
        std::vector<py::dict> out;
        out.reserve(r.detections.size());
        for (const auto& d : r.detections) out.push_back(det_to_dict(d));
        return out;
    });

    m.def("mean_ap", [](const py::dict& dets, const py::dict& gts,
                        const std::vector<double>& thresholds) {
        DetMap dm;
        for (auto item : dets) {
            std::vector<Detection> vd;
            for (auto d : item.second.cast<py::list>())
                vd.push_back(det_from_dict(d.cast<py::dict>()));
            dm[item.first.cast<std::string>()] = std::move(vd);
        }
        GtMap gm;
        for (auto item : gts) {
            VideoAnnotations ann;
            auto entry = item.second.cast<py::dict>();
            ann.duration_frames = entry["duration_frames"].cast<double>();
            for (auto g : entry["annotations"].cast<py::list>())
                ann.annotations.push_back(gt_from_dict(g.cast<py::dict>()));
            gm[item.first.cast<std::string>()] = std::move(ann);
        }
        EvalReport rep = mean_ap(dm, gm, thresholds);
        py::dict out;
        out["thresholds"] = rep.thresholds;
        out["map_per_threshold"] = rep.map_per_threshold;
        out["average_map"] = rep.average_map;
        py::dict ap;
        for (const auto& [cls, aps] : rep.ap) ap[py::int_(cls)] = aps;
        out["ap_per_class"] = ap;
        return out;
    });
}
