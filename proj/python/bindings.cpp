#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cloneforge/harness.hpp"
#include "cloneforge/report.hpp"
#include "cloneforge/synthetic.hpp"

namespace py = pybind11;
using namespace cloneforge;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Config objects cross the boundary as JSON text; the Python side dumps dicts.
TrainConfig train_config(const std::string& json_text) {
  return json_text.empty() ? TrainConfig{} : train_config_from_json(Json::parse(json_text));
}

Tensor image_batch(const FloatArray& a) {
  if (a.ndim() != 4 || a.shape(1) != kImageChannels || a.shape(2) != kImageSide || a.shape(3) != kImageSide) {
    throw std::invalid_argument("expected an N x 3 x 32 x 32 float array");
  }
  Tensor t({a.shape(0), kImageChannels, kImageSide, kImageSide});
  std::copy_n(a.data(), t.numel(), t.data.begin());
  return t;
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  FloatArray out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> vec_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> as_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

LabeledScores labeled(const DoubleArray& pos, const DoubleArray& neg) { return {as_vector(pos), as_vector(neg)}; }

py::object json_to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Per-anchor positive-unlabeled clone detection";
  m.attr("__version__") = tool_version();

  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Corpus, std::shared_ptr<Corpus>>(m, "Corpus")
      .def(py::init([](const FloatArray& images, std::vector<std::string> ids) {
             const Tensor t = image_batch(images);
             CorpusManifest manifest;
             manifest.format = "array";
             return std::make_shared<Corpus>(std::vector<float>(t.data.begin(), t.data.end()), std::move(ids), std::move(manifest));
           }),
           py::arg("images"), py::arg("ids"))
      .def("__len__", &Corpus::size)
      .def_property_readonly("ids", &Corpus::ids)
      .def_property_readonly("checksum", &Corpus::checksum)
      .def_property_readonly("manifest",
                              [](const Corpus& c) { return json_to_py(Json::parse(manifest_to_json(c.manifest()))); })
      .def("image", [](const Corpus& c, std::size_t i) { return to_array(c.get(i)); })
      .def("find", [](const Corpus& c, const std::string& id) -> std::optional<std::size_t> {
        const auto i = c.find(id);
        return i == c.size() ? std::nullopt : std::optional<std::size_t>(i);
      });

  m.def("load_store", [](const std::filesystem::path& p) { return std::make_shared<Corpus>(load_store(p)); });
  m.def("save_store", &save_store, py::arg("path"), py::arg("corpus"));
  m.def("load_cifar10_bin", [](const std::vector<std::filesystem::path>& paths) {
    return std::make_shared<Corpus>(load_cifar10_bin(paths));
  });
  m.def("load_image_dir", [](const std::filesystem::path& dir) {
    return std::make_shared<Corpus>(load_image_dir(dir));
  });
  m.def("write_synthetic_cifar", &write_synthetic_cifar, py::arg("path"), py::arg("count"), py::arg("seed"));

  py::class_<AnchorModel>(m, "AnchorModel")
      .def_readonly("anchor_id", &AnchorModel::anchor_id)
      .def_readonly("mu", &AnchorModel::mu)
      .def_readonly("m", &AnchorModel::m)
      .def_readonly("tau", &AnchorModel::tau)
      .def_property_readonly("embed_dim", [](const AnchorModel& a) { return a.encoder.embed_dim(); })
      .def_property_readonly("loss_trace_csv", &loss_trace_csv)
      .def("latent_norms",
           [](const AnchorModel& a, const FloatArray& images) {
             return vec_array(batched_norms(a.encoder, image_batch(images)));
           })
      .def("embed", [](const AnchorModel& a, const FloatArray& images) {
        return to_array(a.encoder.forward(image_batch(images)));
      })
      .def("save", [](const AnchorModel& a, const std::filesystem::path& p) { save_anchor_model(p, a); });

  m.def("load_anchor_model", &load_anchor_model, py::arg("path"), py::arg("anchor_id"));

  m.def(
      "_train_anchor",
      [](const Corpus& corpus, std::size_t anchor, const std::string& config) {
        const TrainConfig cfg = train_config(config);
        py::gil_scoped_release release;
        return train_anchor(corpus, anchor, cfg);
      },
      py::arg("corpus"), py::arg("anchor"), py::arg("config") = "");

  m.def(
      "score_corpus",
      [](const AnchorModel& model, const Corpus& corpus) {
        ScoreTable t;
        {
          py::gil_scoped_release release;
          t = score_corpus(model, corpus);
        }
        py::dict out;
        out["norms"] = vec_array(t.norms);
        out["scores"] = vec_array(t.scores);
        out["is_clone"] = vec_array(t.is_clone);
        out["tau"] = t.tau;
        return out;
      },
      py::arg("model"), py::arg("corpus"));

  m.def(
      "top_k",
      [](const FloatArray& scores, std::size_t k) {
        return top_k(std::span<const float>(scores.data(), static_cast<std::size_t>(scores.size())), k);
      },
      py::arg("scores"), py::arg("k") = 20);

  m.def(
      "make_clones",
      [](const FloatArray& anchor, std::int64_t count, std::uint64_t seed) {
        if (anchor.ndim() != 3) throw std::invalid_argument("expected a 3 x 32 x 32 image");
        Tensor img({anchor.shape(0), anchor.shape(1), anchor.shape(2)});
        std::copy_n(anchor.data(), img.numel(), img.data.begin());
        AugmentConfig cfg;
        cfg.seed = seed;
        return to_array(make_clones(img, count, cfg));
      },
      py::arg("anchor"), py::arg("count"), py::arg("seed"));

  m.def(
      "pu_loss",
      [](const FloatArray& pos, const FloatArray& unl, float margin, double lambda_var) {
        PULossGradient<float> g;
        const auto v = pu_loss<float>(std::span<const float>(pos.data(), static_cast<std::size_t>(pos.size())),
                                      std::span<const float>(unl.data(), static_cast<std::size_t>(unl.size())),
                                      margin, PULossConfig{lambda_var}, &g);
        py::dict out;
        out["total"] = v.total;
        out["consistency"] = v.consistency;
        out["variance"] = v.variance;
        out["hinge"] = v.hinge;
        out["mu"] = v.mu;
        out["d_pos"] = vec_array(g.d_pos);
        out["d_unl"] = vec_array(g.d_unl);
        out["d_margin"] = g.d_margin;
        return out;
      },
      py::arg("pos"), py::arg("unl"), py::arg("margin"), py::arg("lambda_var") = 0.0);

  m.def("auroc", [](const DoubleArray& pos, const DoubleArray& neg) { return auroc(labeled(pos, neg)); });
  m.def("auprc", [](const DoubleArray& pos, const DoubleArray& neg) { return auprc(labeled(pos, neg)); });
  m.def("best_f1", [](const DoubleArray& pos, const DoubleArray& neg) { return best_f1(labeled(pos, neg)); });
  m.def("prf1", [](std::size_t tp, std::size_t fp, std::size_t fn) {
    const PRF1 r = prf1(tp, fp, fn);
    return py::make_tuple(r.precision, r.recall, r.f1);
  });
  m.def(
      "calibration_sweep",
      [](const DoubleArray& pos, const DoubleArray& neg, double tau) {
        return json_to_py(calibration_to_json(calibration_sweep(labeled(pos, neg), tau)));
      },
      py::arg("pos"), py::arg("neg"), py::arg("tau"));

  m.def(
      "_run_trial",
      [](const Corpus& corpus, const std::string& spec_json) {
        const TrialSpec spec = trial_spec_from_json(Json::parse(spec_json));
        TrialMetrics t;
        {
          py::gil_scoped_release release;
          t = run_trial(corpus, spec);
        }
        return trial_to_json(t).dump();
      },
      py::arg("corpus"), py::arg("spec"));

  m.def(
      "_run_benchmark",
      [](const Corpus& corpus, std::size_t n_anchors, const std::string& spec_json, int jobs, std::uint64_t seed) {
        const TrialSpec spec = trial_spec_from_json(Json::parse(spec_json));
        py::gil_scoped_release release;
        return benchmark_json(run_benchmark(corpus, n_anchors, spec, jobs, seed));
      },
      py::arg("corpus"), py::arg("n_anchors"), py::arg("spec"), py::arg("jobs"), py::arg("seed"));
}
