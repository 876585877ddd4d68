// Python bindings for the FaceChannel stack: metrics, losses, image resize,
// the model itself (forward/save/load/train), the layer gradient suite, and
// the TPE search loop. Tensors cross the boundary as float32 numpy arrays.
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"

#include "facechannel/data.hpp"
#include "facechannel/layer_suite.hpp"
#include "facechannel/losses.hpp"
#include "facechannel/metrics.hpp"
#include "facechannel/model.hpp"
#include "facechannel/tpe.hpp"
#include "facechannel/train.hpp"

namespace py = pybind11;
using namespace facechannel;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> tensor_from(const FloatArray& a) {
  Shape shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  Tensor<float> t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

py::array_t<float> array_from(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

py::object json_to_py(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

Tensor<float> as_image_batch(const FloatArray& a) {
  Tensor<float> t = tensor_from(a);
  if (t.shape().size() == 3) t = t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  return t;
}

Dataset dataset_from_arrays(const Model<float>& model, const FloatArray& images,
                            const FloatArray& labels) {
  if (images.ndim() != 4) throw std::invalid_argument("images must be [N,3,128,128]");
  if (labels.ndim() != 2) throw std::invalid_argument("labels must be [N,label_width]");
  if (images.shape(0) != labels.shape(0))
    throw std::invalid_argument("images and labels disagree on N");
  if (model.has_categorical_head() && model.has_dimensional_head())
    throw std::invalid_argument("in-memory training supports single-head models");

  Dataset data;
  if (model.has_dimensional_head()) {
    data.schema = LabelSchema::dimensional;
  } else {
    data.schema = LabelSchema::distribution;
    data.num_classes = model.config().num_classes;
  }
  const Tensor<float> batch = tensor_from(images);
  const std::size_t n = batch.dim(0);
  const std::size_t per = batch.size() / n;
  const std::size_t width = static_cast<std::size_t>(labels.shape(1));
  if (width != data.label_width())
    throw std::invalid_argument("label width " + std::to_string(width) + " does not match head (" +
                                std::to_string(data.label_width()) + " expected)");
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> img({batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.data() + i * per, batch.data() + (i + 1) * per, img.data());
    data.images.push_back(std::move(img));
    data.labels.emplace_back(labels.data() + i * width, labels.data() + (i + 1) * width);
    data.paths.push_back("array[" + std::to_string(i) + "]");
  }
  return data;
}

LossKind loss_from_name(const std::string& name) {
  if (name == "soft_cross_entropy") return LossKind::soft_cross_entropy;
  if (name == "mse") return LossKind::mse;
  if (name == "ccc") return LossKind::ccc;
  throw std::invalid_argument("loss must be soft_cross_entropy|mse|ccc, got '" + name + "'");
}

SearchSpace space_from_dict(const py::dict& d) {
  SearchSpace space;
  for (const auto& item : d) {
    const std::string name = py::cast<std::string>(item.first);
    const py::dict spec = py::cast<py::dict>(item.second);
    const std::string type = py::cast<std::string>(spec["type"]);
    if (type == "uniform") {
      space.add(name, Dimension::uniform(py::cast<double>(spec["low"]),
                                         py::cast<double>(spec["high"])));
    } else if (type == "log_uniform") {
      space.add(name, Dimension::log_uniform(py::cast<double>(spec["low"]),
                                             py::cast<double>(spec["high"])));
    } else if (type == "choice") {
      space.add(name, Dimension::choice(py::cast<std::vector<double>>(spec["options"])));
    } else {
      throw std::invalid_argument("dimension '" + name +
                                  "': type must be uniform|log_uniform|choice");
    }
  }
  space.validate();
  return space;
}

py::dict trial_to_dict(const TrialRecord& t) {
  py::dict d;
  d["config"] = t.config;
  d["status"] = t.status == TrialRecord::Status::ok ? "ok" : "failed";
  if (t.status == TrialRecord::Status::ok) d["objective"] = t.objective;
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FaceChannel facial-expression network (C++ core)";

  py::enum_<Head>(m, "Head")
      .value("categorical", Head::categorical)
      .value("dimensional", Head::dimensional)
      .value("both", Head::both);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("conv_blocks", &ModelConfig::conv_blocks)
      .def_readwrite("dense_units", &ModelConfig::dense_units)
      .def_readwrite("head", &ModelConfig::head)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("dropout_rate", &ModelConfig::dropout_rate)
      .def_readwrite("shunting_kernel", &ModelConfig::shunting_kernel)
      .def_readwrite("seed", &ModelConfig::seed)
      .def("parameter_count", &ModelConfig::parameter_count)
      .def("validate", &ModelConfig::validate);

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const ModelConfig& cfg) { return Model<float>(cfg); }),
           py::arg("config") = ModelConfig())
      .def("parameter_count", [](Model<float>& self) { return self.parameter_count(); })
      .def("summary", [](Model<float>& self) { return self.architecture().to_string(); })
      .def("architecture",
           [](Model<float>& self) {
             const ArchitectureSummary s = self.architecture();
             py::dict d;
             d["conv_layers"] = s.conv_layers;
             d["pool_layers"] = s.pool_layers;
             d["dense_units"] = s.dense_units;
             d["input_h"] = s.input_h;
             d["input_w"] = s.input_w;
             d["final_h"] = s.final_h;
             d["final_w"] = s.final_w;
             d["parameter_count"] = s.parameter_count;
             return d;
           })
      .def(
          "forward",
          [](Model<float>& self, const FloatArray& input) {
            Rng rng(0);
            const Predictions<float> out = self.forward(as_image_batch(input), Mode::eval, rng);
            py::dict d;
            if (!out.categorical.empty()) d["categorical"] = array_from(out.categorical);
            if (!out.dimensional.empty()) d["dimensional"] = array_from(out.dimensional);
            return d;
          },
          py::arg("input"), "Run the network in eval mode on [N,3,128,128] (or one [3,128,128]).")
      .def("save", [](Model<float>& self, const std::string& path) { self.save(path); },
           py::arg("path"))
      .def(
          "load",
          [](Model<float>& self, const std::string& path, bool reinit_head_on_mismatch) {
            self.load(path, reinit_head_on_mismatch
                                ? Model<float>::LoadPolicy::reinit_head_on_mismatch
                                : Model<float>::LoadPolicy::strict);
          },
          py::arg("path"), py::arg("reinit_head_on_mismatch") = false)
      .def(
          "train_on",
          [](Model<float>& self, const FloatArray& images, const FloatArray& labels,
             std::size_t epochs, double learning_rate, double momentum, std::size_t batch_size,
             std::uint64_t seed, std::size_t freeze_prefix, const std::string& loss) {
            const Dataset data = dataset_from_arrays(self, images, labels);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.learning_rate = learning_rate;
            cfg.momentum = momentum;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            cfg.freeze_prefix = freeze_prefix;
            cfg.loss = loss_from_name(loss);
            const History history = train(self, data, nullptr, cfg);
            py::list out;
            for (const auto& e : history) {
              py::dict d;
              d["epoch"] = e.epoch;
              d["loss"] = e.loss;
              out.append(d);
            }
            return out;
          },
          py::arg("images"), py::arg("labels"), py::arg("epochs") = 1,
          py::arg("learning_rate") = 0.01, py::arg("momentum") = 0.9, py::arg("batch_size") = 32,
          py::arg("seed") = 1, py::arg("freeze_prefix") = 0,
          py::arg("loss") = "soft_cross_entropy")
      .def(
          "evaluate_on",
          [](Model<float>& self, const FloatArray& images, const FloatArray& labels) {
            const Dataset data = dataset_from_arrays(self, images, labels);
            return json_to_py(evaluate(self, data).to_json());
          },
          py::arg("images"), py::arg("labels"));

  m.def("load_model", [](const std::string& path) { return load_model(path); }, py::arg("path"),
        "Load a weight file, inferring the architecture from tensor shapes.");

  m.def("ccc", &ccc, py::arg("x"), py::arg("y"),
        "Concordance correlation coefficient (population moments).");
  m.def("pearson", &pearson, py::arg("x"), py::arg("y"));
  m.def("accuracy", &accuracy, py::arg("predicted"), py::arg("truth"));
  m.def("confusion", &confusion, py::arg("predicted"), py::arg("truth"), py::arg("num_classes"));

  m.def(
      "soft_cross_entropy",
      [](const FloatArray& pred, const FloatArray& target) {
        return soft_cross_entropy(tensor_from(pred), tensor_from(target));
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "mse_loss",
      [](const FloatArray& pred, const FloatArray& target) {
        return mse_loss(tensor_from(pred), tensor_from(target));
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "ccc_loss",
      [](const FloatArray& pred, const FloatArray& target) {
        return ccc_loss(tensor_from(pred), tensor_from(target));
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "resize_bilinear",
      [](const FloatArray& image, std::size_t out_h, std::size_t out_w) {
        return array_from(resize_bilinear(tensor_from(image), out_h, out_w));
      },
      py::arg("image"), py::arg("out_h"), py::arg("out_w"),
      "Half-pixel-center bilinear resize of a [3,H,W] image in [0,1].");

  m.def(
      "run_gradient_suite",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& entry : run_layer_suite(seed)) {
          py::dict d;
          d["layer"] = entry.layer;
          d["max_rel_err"] = entry.report.max_rel_err;
          d["tolerance"] = entry.report.tolerance;
          d["passed"] = entry.report.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 17, "Finite-difference gradient check of every layer type.");

  m.def(
      "tpe_minimize",
      [](const std::function<double(const ParamPoint&)>& objective, const py::dict& space,
         std::size_t budget, std::uint64_t seed) {
        const OptimizeResult result = optimize(objective, space_from_dict(space), budget, seed);
        py::dict d;
        d["best"] = result.best ? trial_to_dict(*result.best) : py::dict();
        py::list hist;
        for (const auto& t : result.history) hist.append(trial_to_dict(t));
        d["history"] = hist;
        return d;
      },
      py::arg("objective"), py::arg("space"), py::arg("budget") = 20, py::arg("seed") = 1,
      "Tree-structured Parzen estimator search; objective maps a config dict to a scalar.");
}
