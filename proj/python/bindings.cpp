// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trajdiff/evaluation.hpp"
#include "trajdiff/gaussian_model.hpp"
#include "trajdiff/mask_normalization.hpp"
#include "trajdiff/temporal_prior.hpp"
#include "trajdiff/tid_sampler.hpp"
#include "trajdiff/toy_denoiser.hpp"

namespace py = pybind11;
using namespace trajdiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Video to_video(const Array& a) {
  if (a.ndim() != 4) throw ShapeError("expected an (N, C, H, W) array");
  Video v({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
           static_cast<int>(a.shape(3))});
  std::copy(a.data(), a.data() + a.size(), v.data());
  return v;
}

Array to_array(const Video& v) {
  const VideoShape& s = v.shape();
  Array out({s.frames, s.channels, s.height, s.width});
  std::copy(v.data(), v.data() + v.size(), out.mutable_data());
  return out;
}

BoxTrajectory to_trajectory(int canvas_h, int canvas_w, const std::vector<std::array<double, 4>>& boxes) {
  BoxTrajectory t{canvas_h, canvas_w, {}};
  for (const auto& b : boxes) t.boxes.push_back({b[0], b[1], b[2], b[3]});
  t.validate();
  return t;
}

std::vector<std::array<double, 4>> from_trajectory(const BoxTrajectory& t) {
  std::vector<std::array<double, 4>> out;
  for (const Box& b : t.boxes) out.push_back({b.x0, b.y0, b.x1, b.y1});
  return out;
}

Eigen::MatrixXi to_int(const BinaryMatrix& m) { return m.cast<int>(); }

GuidanceConfig make_guidance(const std::string& mode, py::kwargs kw) {
  GuidanceConfig c = GuidanceConfig::for_mode(parse_sampler_mode(mode));
  for (auto item : kw) {
    const auto key = item.first.cast<std::string>();
    if (key == "gamma") c.gamma = item.second.cast<double>();
    else if (key == "inner_steps") c.inner_steps = item.second.cast<int>();
    else if (key == "cg") c.cg = item.second.cast<double>();
    else if (key == "omega") c.omega = item.second.cast<double>();
    else if (key == "frozen_steps") c.frozen_steps = item.second.cast<int>();
    else if (key == "grad_norm") c.grad_norm = item.second.cast<bool>();
    else if (key == "seed") c.seed = item.second.cast<std::uint64_t>();
    else if (key == "masks") c.use_masks = item.second.cast<bool>();
    else if (key == "mask_norm") c.mask_norm = item.second.cast<bool>();
    else if (key == "mask_mode") c.mask_mode = parse_mask_mode(item.second.cast<std::string>());
    else if (key == "exact_vjp") c.exact_vjp = item.second.cast<bool>();
    else throw ConfigError("unknown guidance option '" + key + "'");
  }
  return c;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["coverage_hit"] = r.coverage_hit;
  d["miou"] = r.miou ? py::object(py::float_(*r.miou)) : py::object(py::none());
  d["detected_frames"] = r.detected_frames;
  py::list ious;
  for (const auto& v : r.frame_iou) ious.append(v ? py::object(py::float_(*v)) : py::object(py::none()));
  d["frame_iou"] = ious;
  return d;
}

}  // namespace

PYBIND11_MODULE(_trajdiff, m) {
  m.doc() = "Trajectory-controlled video diffusion core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("betas", &NoiseSchedule::betas)
      .def_property_readonly("alpha_bars", &NoiseSchedule::alpha_bars)
      .def("alpha_bar", &NoiseSchedule::alpha_bar);
  m.def("make_linear_schedule", &make_linear_schedule, py::arg("steps"), py::arg("beta_start"),
        py::arg("beta_end"));
  m.def(
      "tid_coefficients",
      [](const NoiseSchedule& s, int t, double gamma) {
        const auto c = tid_coefficients(s, t, gamma);
        return py::make_tuple(c.eta_l, c.eta_k);
      },
      py::arg("schedule"), py::arg("t"), py::arg("gamma") = kDefaultGamma,
      "Returns (eta_l, eta_k).");

  m.def(
      "rasterize_boxes",
      [](int h, int w, const std::vector<std::array<double, 4>>& boxes, int gh, int gw) {
        return rasterize_boxes(to_trajectory(h, w, boxes), gh, gw);
      },
      py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"), py::arg("grid_h"), py::arg("grid_w"));
  m.def("build_self_mask", [](const TokenMask& mv) { return to_int(build_self_mask(mv)); });
  m.def("build_cross_mask",
        [](const TokenMask& mv, const TokenMask& my) { return to_int(build_cross_mask(mv, my)); });
  m.def("build_temporal_mask", [](const std::vector<TokenMask>& masks, int token) {
    return to_int(build_temporal_mask(masks, token));
  });
  m.def("masks_active", &masks_active, py::arg("step_ordinal"), py::arg("total_steps"),
        py::arg("frozen_steps"));

  m.def(
      "attention",
      [](Eigen::MatrixXd q, Eigen::MatrixXd k, Eigen::MatrixXd v,
         std::optional<Eigen::MatrixXi> mask, const std::string& mode) {
        const auto in = AttentionInputs::make(std::move(q), std::move(k), std::move(v));
        if (!mask) return attention(in, nullptr);
        const BinaryMatrix bm = mask->cast<std::uint8_t>();
        return attention(in, &bm, parse_mask_mode(mode));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("mask") = py::none(),
      py::arg("mode") = "additive");
  m.def("efdm_match",
        [](const std::vector<double>& am, const std::vector<double>& au) { return efdm_match(am, au); },
        py::arg("a_m"), py::arg("a_u"));
  m.def(
      "mask_normalize",
      [](Eigen::MatrixXd masked, Eigen::MatrixXd unmasked) {
        return mask_normalize(AttentionPair{std::move(masked), std::move(unmasked)});
      },
      py::arg("masked"), py::arg("unmasked"));

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); });
  m.def(
      "tau",
      [](int h, int w, const std::vector<std::array<double, 4>>& boxes, const Array& z, bool strict) {
        return tau(to_trajectory(h, w, boxes), to_video(z), TauOptions{strict});
      },
      py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"), py::arg("z"), py::arg("strict") = true);
  m.def(
      "tau_gradient",
      [](int h, int w, const std::vector<std::array<double, 4>>& boxes, const Array& z, bool strict) {
        return to_array(tau_gradient(to_trajectory(h, w, boxes), to_video(z), TauOptions{strict}));
      },
      py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"), py::arg("z"), py::arg("strict") = true);

  m.def(
      "generate_gaussian",
      [](int h, int w, const std::vector<std::array<double, 4>>& boxes, int channels,
         const NoiseSchedule& schedule, double amplitude, double r, double s2, const std::string& mode,
         py::kwargs kw) {
        const BoxTrajectory traj = to_trajectory(h, w, boxes);
        const VideoShape shape{traj.frames(), channels, h, w};
        GaussianDenoiser d(GaussianVideoModel::from_trajectory(traj, shape, amplitude, r, s2), schedule);
        const Conditioning cond{Eigen::MatrixXd::Zero(1, 1), TokenMask{1}, traj};
        const GuidanceConfig g = make_guidance(mode, kw);
        Video out;
        {
          py::gil_scoped_release release;
          out = generate(d, cond, g, schedule, shape);
        }
        return to_array(out);
      },
      py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"), py::arg("channels"), py::arg("schedule"),
      py::arg("amplitude") = 1.5, py::arg("r") = 0.9, py::arg("s2") = 0.25, py::arg("mode") = "tid",
      "Samples the analytic Gaussian video model of a trajectory. Keyword arguments set guidance fields.");

  py::class_<ToyDenoiser>(m, "ToyDenoiser")
      .def_static("load", &ToyDenoiser::load, py::arg("stem"), py::arg("schedule"))
      .def("predict_noise",
           [](const ToyDenoiser& d, const Array& z, int t) {
             return to_array(d.predict_noise(to_video(z), t, nullptr, nullptr));
           })
      .def(
          "generate",
          [](const ToyDenoiser& d, int identity, int h, int w, const std::vector<std::array<double, 4>>& boxes,
             const std::string& mode, py::kwargs kw) {
            BlobDatasetConfig data;
            data.shape = d.config().shape;
            const Conditioning cond = make_conditioning(data, identity, to_trajectory(h, w, boxes));
            const GuidanceConfig g = make_guidance(mode, kw);
            Video out;
            {
              py::gil_scoped_release release;
              out = generate(d, cond, g, d.schedule(), d.config().shape);
            }
            return to_array(out);
          },
          py::arg("identity"), py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"),
          py::arg("mode") = "tid");

  m.def(
      "train_toy_denoiser",
      [](int videos, std::uint64_t data_seed, const NoiseSchedule& schedule, int epochs, std::uint64_t seed) {
        const BlobDataset ds = BlobDataset::generate(BlobDatasetConfig{}, videos, data_seed);
        TrainConfig tc;
        tc.epochs = epochs;
        tc.seed = seed;
        TrainReport report;
        std::optional<ToyDenoiser> model;
        {
          py::gil_scoped_release release;
          model.emplace(train_toy_denoiser(ds, schedule, tc, ToyDenoiserConfig{}, &report));
        }
        return py::make_tuple(std::move(*model), report.epoch_loss);
      },
      py::arg("videos"), py::arg("data_seed"), py::arg("schedule"), py::arg("epochs"), py::arg("seed") = 0);

  m.def(
      "blob_sample",
      [](std::uint64_t seed) {
        const BlobSample s = make_blob_sample(BlobDatasetConfig{}, seed);
        return py::make_tuple(to_array(s.video), from_trajectory(s.trajectory), s.identity);
      },
      py::arg("seed"), "Returns (video, boxes on the 16x16 latent canvas, identity).");

  m.def(
      "detect_blob",
      [](const Eigen::MatrixXd& frame, std::optional<double> threshold) -> std::optional<std::array<double, 4>> {
        const auto b = detect_blob(frame, threshold.value_or(default_threshold(frame)));
        if (!b) return std::nullopt;
        return std::array<double, 4>{b->x0, b->y0, b->x1, b->y1};
      },
      py::arg("frame"), py::arg("threshold") = py::none());
  m.def("iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
  });
  m.def(
      "evaluate",
      [](const Array& video, int h, int w, const std::vector<std::array<double, 4>>& boxes,
         std::optional<double> threshold) {
        return report_dict(evaluate(to_video(video), to_trajectory(h, w, boxes), threshold));
      },
      py::arg("video"), py::arg("canvas_h"), py::arg("canvas_w"), py::arg("boxes"),
      py::arg("threshold") = py::none());
}
