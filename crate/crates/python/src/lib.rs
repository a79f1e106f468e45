//! Python bindings: calibration loading, frame triangulation, and tracking.
//!
//! Detections are passed as `{view_id: [detection, ...]}` where each detection is a
//! sequence of `[x, y, confidence]` rows, one per joint. Nested lists and 2D numpy
//! arrays both work.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};

use rapidpose::io::{self, IoError};
use rapidpose::synth::{build_fixture, CorruptionSpec, SceneSpec};
use rapidpose::{
    builtin_joint_set, CameraRig, Detection2D, Person3D, PipelineConfig, TrackerConfig, Vec2,
    ViewDetections,
};

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Applies overrides given as a dict or a JSON object string onto `base`.
fn with_overrides<T>(base: &T, overrides: Option<&Bound<'_, PyAny>>) -> PyResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut value = serde_json::to_value(base).map_err(value_err)?;
    let Some(obj) = overrides.filter(|o| !o.is_none()) else {
        return serde_json::from_value(value).map_err(value_err);
    };
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    let patch: serde_json::Value = serde_json::from_str(&text).map_err(value_err)?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(PyValueError::new_err("overrides must be a mapping"));
    };
    let target = value.as_object_mut().expect("configs serialize to objects");
    for (k, v) in patch {
        target.insert(k, v);
    }
    serde_json::from_value(value).map_err(value_err)
}

#[pyclass(name = "Rig", module = "rapidpose_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRig {
    inner: CameraRig,
}

#[pymethods]
impl PyRig {
    #[getter]
    fn camera_ids(&self) -> Vec<String> {
        self.inner.cameras.iter().map(|c| c.id.clone()).collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_calibration(&path, &self.inner).map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.inner.cameras.len()
    }
}

#[pyclass(name = "Config", module = "rapidpose_py", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __getattr__(&self, py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
        let value = serde_json::to_value(&self.inner).map_err(value_err)?;
        match value.get(name) {
            Some(v) => Ok(py
                .import("json")?
                .call_method1("loads", (v.to_string(),))?
                .unbind()),
            None => Err(pyo3::exceptions::PyAttributeError::new_err(name.to_string())),
        }
    }
}

#[pyclass(name = "Person", module = "rapidpose_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPerson {
    inner: Person3D,
}

#[pymethods]
impl PyPerson {
    /// Joint positions in meters; `None` for missing joints.
    #[getter]
    fn joints(&self) -> Vec<Option<(f64, f64, f64)>> {
        self.inner
            .joints
            .iter()
            .map(|j| j.map(|p| (p.x, p.y, p.z)))
            .collect()
    }

    #[getter]
    fn track_id(&self) -> Option<u64> {
        self.inner.track_id
    }

    #[getter]
    fn support(&self) -> Vec<u32> {
        self.inner.joint_support.clone()
    }

    #[getter]
    fn filled(&self) -> Vec<bool> {
        self.inner.filled.clone()
    }

    #[getter]
    fn group_size(&self) -> usize {
        self.inner.group_size
    }

    fn __repr__(&self) -> String {
        format!(
            "Person(track_id={:?}, valid_joints={})",
            self.inner.track_id,
            self.inner.valid_count()
        )
    }
}

fn parse_detection(
    view: &str,
    index: usize,
    obj: &Bound<'_, PyAny>,
    joint_count: usize,
) -> PyResult<Detection2D> {
    let rows: Vec<Vec<f64>> = obj.extract().map_err(|_| {
        PyValueError::new_err(format!(
            "view '{view}' detection {index}: expected a {joint_count} x 3 sequence of numbers"
        ))
    })?;
    if rows.len() != joint_count || rows.iter().any(|r| r.len() != 3) {
        let width = rows.iter().map(Vec::len).find(|&w| w != 3).unwrap_or(3);
        return Err(PyValueError::new_err(format!(
            "view '{view}' detection {index}: expected shape ({joint_count}, 3), got ({}, {width})",
            rows.len()
        )));
    }
    Ok(Detection2D {
        joints: rows.iter().map(|r| Vec2::new(r[0], r[1])).collect(),
        confidence: rows.iter().map(|r| r[2]).collect(),
    })
}

fn parse_views(views: &Bound<'_, PyDict>, joint_count: usize) -> PyResult<Vec<ViewDetections>> {
    let mut out = Vec::with_capacity(views.len());
    for (key, value) in views.iter() {
        let view: String = key.extract()?;
        let mut detections = Vec::new();
        for (i, det) in value.try_iter()?.enumerate() {
            detections.push(parse_detection(&view, i, &det?, joint_count)?);
        }
        out.push(ViewDetections { view, detections });
    }
    Ok(out)
}

fn unwrap_persons(persons: &Bound<'_, PyList>) -> PyResult<Vec<Person3D>> {
    persons
        .iter()
        .map(|p| Ok(p.cast::<PyPerson>()?.get().inner.clone()))
        .collect()
}

fn wrap_persons(persons: Vec<Person3D>) -> Vec<PyPerson> {
    persons.into_iter().map(|inner| PyPerson { inner }).collect()
}

#[pyclass(name = "Pipeline", module = "rapidpose_py", frozen)]
pub struct PyPipeline {
    inner: rapidpose::Pipeline,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (joint_set = "body20", config = None, threads = 1))]
    fn new(joint_set: &str, config: Option<PyConfig>, threads: usize) -> PyResult<Self> {
        let set = io::resolve_joint_set(joint_set).map_err(io_err)?;
        let config = config.map(|c| c.inner).unwrap_or_default();
        let inner = rapidpose::Pipeline::new(set, config)
            .map_err(value_err)?
            .with_threads(threads);
        Ok(PyPipeline { inner })
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.inner.joint_set.joint_names.clone()
    }

    /// Triangulates one frame. `prev` is the previous frame's output, used to pre-filter pairs.
    #[pyo3(signature = (views, rig, prev = None))]
    fn process_frame(
        &self,
        py: Python<'_>,
        views: &Bound<'_, PyDict>,
        rig: &PyRig,
        prev: Option<&Bound<'_, PyList>>,
    ) -> PyResult<Vec<PyPerson>> {
        let views = parse_views(views, self.inner.joint_set.joint_count())?;
        let prev = match prev {
            Some(p) => unwrap_persons(p)?,
            None => Vec::new(),
        };
        let rig = &rig.inner;
        let result = py
            .detach(|| self.inner.process_frame(&views, rig, &prev))
            .map_err(value_err)?;
        Ok(wrap_persons(result.persons))
    }
}

#[pyclass(name = "Tracker", module = "rapidpose_py")]
pub struct PyTracker {
    inner: rapidpose::Tracker,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (overrides = None))]
    fn new(overrides: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: TrackerConfig = with_overrides(&TrackerConfig::default(), overrides)?;
        cfg.validate().map_err(PyValueError::new_err)?;
        Ok(PyTracker {
            inner: rapidpose::Tracker::new(cfg),
        })
    }

    #[pyo3(signature = (persons, frame_dt_s = 0.04))]
    fn update(
        &mut self,
        py: Python<'_>,
        persons: &Bound<'_, PyList>,
        frame_dt_s: f64,
    ) -> PyResult<Vec<PyPerson>> {
        if !(frame_dt_s > 0.0) {
            return Err(PyValueError::new_err("frame_dt_s must be positive"));
        }
        let persons = unwrap_persons(persons)?;
        let tracker = &mut self.inner;
        Ok(wrap_persons(py.detach(|| tracker.update(persons, frame_dt_s))))
    }
}

#[pyfunction]
fn load_calibration(path: PathBuf) -> PyResult<PyRig> {
    Ok(PyRig {
        inner: io::load_calibration(&path).map_err(io_err)?,
    })
}

/// Default pipeline settings with `overrides` (dict or JSON object) applied.
#[pyfunction]
#[pyo3(signature = (overrides = None))]
fn make_config(overrides: Option<&Bound<'_, PyAny>>) -> PyResult<PyConfig> {
    let inner: PipelineConfig = with_overrides(&PipelineConfig::default(), overrides)?;
    inner.validate().map_err(value_err)?;
    Ok(PyConfig { inner })
}

/// A synthetic scene: returns `(rig, frames, ground_truth)` with frames in the
/// `process_frame` input layout and ground truth as per-frame lists of joint lists.
#[pyfunction]
#[pyo3(signature = (persons = 4, cameras = 5, frames = 1, seed = 0, noise_px = 0.0, joint_set = "body20"))]
fn synthetic_scene<'py>(
    py: Python<'py>,
    persons: usize,
    cameras: usize,
    frames: usize,
    seed: u64,
    noise_px: f64,
    joint_set: &str,
) -> PyResult<(PyRig, Vec<Bound<'py, PyDict>>, Vec<Vec<Vec<Option<(f64, f64, f64)>>>>)> {
    let set = builtin_joint_set(joint_set).map_err(value_err)?;
    let mut spec = SceneSpec::new(persons, cameras, set, seed);
    spec.n_frames = frames;
    let fx = build_fixture(&spec, &CorruptionSpec::noisy(noise_px, seed)).map_err(value_err)?;
    let mut out_frames = Vec::new();
    for views in &fx.detections.frames {
        let d = PyDict::new(py);
        for v in views {
            let dets: Vec<Vec<[f64; 3]>> = v
                .detections
                .iter()
                .map(|det| {
                    det.joints
                        .iter()
                        .zip(&det.confidence)
                        .map(|(p, c)| [p.x, p.y, *c])
                        .collect()
                })
                .collect();
            d.set_item(&v.view, dets)?;
        }
        out_frames.push(d);
    }
    let gt = fx
        .scene
        .frames
        .iter()
        .map(|poses| {
            poses
                .iter()
                .map(|p| p.iter().map(|j| j.map(|v| (v.x, v.y, v.z))).collect())
                .collect()
        })
        .collect();
    let rig = PyRig {
        inner: fx.scene.rig,
    };
    Ok((rig, out_frames, gt))
}

#[pymodule]
pub fn rapidpose_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRig>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPerson>()?;
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(load_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(make_config, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_scene, m)?)?;
    Ok(())
}
