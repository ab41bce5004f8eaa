//! C ABI for the evtrack tracking pipeline.
//!
//! All functions return an `EvtrackStatus` code; results come back through
//! out-parameters. Handles are opaque and must be released with the matching
//! `_free` function. The committed header lives at `include/evtrack.h`.

use evtrack::config::Config;
use evtrack::io::Mesh;
use evtrack::tracker::TrackerState;
use evtrack::types::{CameraIntrinsics, Event, Pose};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::os::raw::c_char;

#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EvtrackStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotVisible = 3,
    InternalError = 4,
}

#[repr(C)]
#[derive(Clone, Copy)]
pub struct EvtrackEvent {
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub polarity: i8,
}

/// Pose as translation + unit quaternion (w, x, y, z).
#[repr(C)]
#[derive(Clone, Copy)]
pub struct EvtrackPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl EvtrackPose {
    fn to_pose(self) -> Option<Pose> {
        let q = Quaternion::new(self.qw, self.qx, self.qy, self.qz);
        if (q.norm() - 1.0).abs() > 0.01 {
            return None;
        }
        Some(Pose::new(
            Vector3::new(self.x, self.y, self.z),
            UnitQuaternion::from_quaternion(q),
        ))
    }

    fn from_pose(p: &Pose) -> Self {
        let q = p.rotation.into_inner();
        Self {
            x: p.translation.x,
            y: p.translation.y,
            z: p.translation.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
        }
    }
}

pub struct EvtrackTracker {
    state: TrackerState,
    mesh: Mesh,
    k: CameraIntrinsics,
    cycle_dt: f64,
}

/// Create a tracker. `vertices` is `vertex_count * 3` doubles, `triangles`
/// is `triangle_count * 3` zero-based indices. Intrinsics are
/// (fx, fy, cx, cy) with sensor size (width, height).
///
/// # Safety
/// `vertices`, `triangles`, and `out` must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn evtrack_tracker_new(
    vertices: *const f64,
    vertex_count: usize,
    triangles: *const u32,
    triangle_count: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    initial_pose: EvtrackPose,
    out: *mut *mut EvtrackTracker,
) -> EvtrackStatus {
    if vertices.is_null() || triangles.is_null() || out.is_null() {
        return EvtrackStatus::NullPointer;
    }
    let Ok(k) = CameraIntrinsics::new(fx, fy, cx, cy, width, height) else {
        return EvtrackStatus::InvalidArgument;
    };
    let vs = std::slice::from_raw_parts(vertices, vertex_count * 3);
    let ts = std::slice::from_raw_parts(triangles, triangle_count * 3);
    let mesh = Mesh {
        vertices: vs.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        triangles: ts.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect(),
    };
    if mesh.validate().is_err() {
        return EvtrackStatus::InvalidArgument;
    }
    let Some(pose) = initial_pose.to_pose() else {
        return EvtrackStatus::InvalidArgument;
    };
    let config = Config::default();
    let cycle_dt = config.cycle_dt;
    let state = TrackerState::new(pose, k, config);
    *out = Box::into_raw(Box::new(EvtrackTracker { state, mesh, k, cycle_dt }));
    EvtrackStatus::Ok
}

/// Feed a batch of events and run tracking cycles up to the last event time.
/// Events must be time-ordered and within the sensor bounds.
///
/// # Safety
/// `tracker` must come from `evtrack_tracker_new`; `events` must be valid
/// for `count` elements.
#[no_mangle]
pub unsafe extern "C" fn evtrack_tracker_process(
    tracker: *mut EvtrackTracker,
    events: *const EvtrackEvent,
    count: usize,
) -> EvtrackStatus {
    if tracker.is_null() || (events.is_null() && count > 0) {
        return EvtrackStatus::NullPointer;
    }
    let tr = &mut *tracker;
    let evs = std::slice::from_raw_parts(events, count);
    let mut batch = Vec::with_capacity(count);
    let mut prev = tr.state.clock;
    for e in evs {
        if e.t < prev || !e.t.is_finite() {
            return EvtrackStatus::InvalidArgument;
        }
        if e.x >= tr.k.width || e.y >= tr.k.height {
            return EvtrackStatus::InvalidArgument;
        }
        prev = e.t;
        batch.push(Event { t: e.t, x: e.x, y: e.y, polarity: e.polarity });
    }
    // run whole cycles up to the last event time
    let end = batch.last().map_or(tr.state.clock, |e| e.t);
    let mut cursor = 0usize;
    while tr.state.clock + tr.cycle_dt <= end + tr.cycle_dt * 0.5 {
        let cycle_end = tr.state.clock + tr.cycle_dt;
        let start = cursor;
        while cursor < batch.len() && batch[cursor].t <= cycle_end {
            cursor += 1;
        }
        tr.state.cycle(&tr.mesh, &batch[start..cursor], false);
    }
    EvtrackStatus::Ok
}

/// Read back the current pose estimate and its timestamp.
///
/// # Safety
/// Pointers must be valid; `tracker` must come from `evtrack_tracker_new`.
#[no_mangle]
pub unsafe extern "C" fn evtrack_tracker_pose(
    tracker: *const EvtrackTracker,
    out_pose: *mut EvtrackPose,
    out_t: *mut f64,
) -> EvtrackStatus {
    if tracker.is_null() || out_pose.is_null() || out_t.is_null() {
        return EvtrackStatus::NullPointer;
    }
    let t = &(*tracker).state;
    *out_pose = EvtrackPose::from_pose(&t.pose);
    *out_t = t.clock;
    EvtrackStatus::Ok
}

/// Release a tracker. Passing null is a no-op.
///
/// # Safety
/// `tracker` must come from `evtrack_tracker_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evtrack_tracker_free(tracker: *mut EvtrackTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Human-readable name for a status code. Returns a static NUL-terminated
/// string; never null.
#[no_mangle]
pub extern "C" fn evtrack_status_str(status: EvtrackStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        EvtrackStatus::Ok => b"ok\0",
        EvtrackStatus::NullPointer => b"null pointer\0",
        EvtrackStatus::InvalidArgument => b"invalid argument\0",
        EvtrackStatus::NotVisible => b"object not visible\0",
        EvtrackStatus::InternalError => b"internal error\0",
    };
    s.as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_buffers() -> (Vec<f64>, Vec<u32>) {
        let mesh = Mesh::cuboid(0.1, 0.1, 0.1);
        let vs = mesh.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let ts = mesh
            .triangles
            .iter()
            .flat_map(|t| [t[0] as u32, t[1] as u32, t[2] as u32])
            .collect();
        (vs, ts)
    }

    fn identity_pose() -> EvtrackPose {
        EvtrackPose { x: 0.0, y: 0.0, z: 0.5, qw: 1.0, qx: 0.0, qy: 0.0, qz: 0.0 }
    }

    #[test]
    fn create_process_query_free() {
        let (vs, ts) = cube_buffers();
        let mut handle: *mut EvtrackTracker = std::ptr::null_mut();
        unsafe {
            let st = evtrack_tracker_new(
                vs.as_ptr(),
                vs.len() / 3,
                ts.as_ptr(),
                ts.len() / 3,
                600.0,
                600.0,
                320.0,
                240.0,
                640,
                480,
                identity_pose(),
                &mut handle,
            );
            assert_eq!(st, EvtrackStatus::Ok);
            assert!(!handle.is_null());

            let events = [
                EvtrackEvent { t: 0.001, x: 254, y: 174, polarity: 1 },
                EvtrackEvent { t: 0.002, x: 255, y: 175, polarity: 1 },
                EvtrackEvent { t: 0.011, x: 256, y: 176, polarity: 1 },
            ];
            assert_eq!(
                evtrack_tracker_process(handle, events.as_ptr(), events.len()),
                EvtrackStatus::Ok
            );

            let mut pose = identity_pose();
            let mut t = 0.0;
            assert_eq!(evtrack_tracker_pose(handle, &mut pose, &mut t), EvtrackStatus::Ok);
            assert!(t > 0.0);
            assert!((pose.qw.powi(2) + pose.qx.powi(2) + pose.qy.powi(2) + pose.qz.powi(2) - 1.0)
                .abs()
                < 1e-9);
            evtrack_tracker_free(handle);
        }
    }

    #[test]
    fn null_and_invalid_arguments() {
        let (vs, ts) = cube_buffers();
        let mut handle: *mut EvtrackTracker = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                evtrack_tracker_new(
                    std::ptr::null(),
                    0,
                    ts.as_ptr(),
                    ts.len() / 3,
                    600.0,
                    600.0,
                    320.0,
                    240.0,
                    640,
                    480,
                    identity_pose(),
                    &mut handle,
                ),
                EvtrackStatus::NullPointer
            );
            // non-positive focal length
            assert_eq!(
                evtrack_tracker_new(
                    vs.as_ptr(),
                    vs.len() / 3,
                    ts.as_ptr(),
                    ts.len() / 3,
                    -1.0,
                    600.0,
                    320.0,
                    240.0,
                    640,
                    480,
                    identity_pose(),
                    &mut handle,
                ),
                EvtrackStatus::InvalidArgument
            );
            // non-unit quaternion
            let mut bad = identity_pose();
            bad.qw = 2.0;
            assert_eq!(
                evtrack_tracker_new(
                    vs.as_ptr(),
                    vs.len() / 3,
                    ts.as_ptr(),
                    ts.len() / 3,
                    600.0,
                    600.0,
                    320.0,
                    240.0,
                    640,
                    480,
                    bad,
                    &mut handle,
                ),
                EvtrackStatus::InvalidArgument
            );

            let st = evtrack_tracker_new(
                vs.as_ptr(),
                vs.len() / 3,
                ts.as_ptr(),
                ts.len() / 3,
                600.0,
                600.0,
                320.0,
                240.0,
                640,
                480,
                identity_pose(),
                &mut handle,
            );
            assert_eq!(st, EvtrackStatus::Ok);
            // out-of-order events rejected
            let events = [
                EvtrackEvent { t: 0.002, x: 10, y: 10, polarity: 1 },
                EvtrackEvent { t: 0.001, x: 10, y: 10, polarity: 1 },
            ];
            assert_eq!(
                evtrack_tracker_process(handle, events.as_ptr(), events.len()),
                EvtrackStatus::InvalidArgument
            );
            // out-of-bounds pixel rejected
            let events = [EvtrackEvent { t: 0.001, x: 9999, y: 10, polarity: 1 }];
            assert_eq!(
                evtrack_tracker_process(handle, events.as_ptr(), 1),
                EvtrackStatus::InvalidArgument
            );
            evtrack_tracker_free(handle);
            evtrack_tracker_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn status_strings() {
        unsafe {
            let s = std::ffi::CStr::from_ptr(evtrack_status_str(EvtrackStatus::Ok));
            assert_eq!(s.to_str().unwrap(), "ok");
            let s = std::ffi::CStr::from_ptr(evtrack_status_str(EvtrackStatus::InvalidArgument));
            assert_eq!(s.to_str().unwrap(), "invalid argument");
        }
    }
}
