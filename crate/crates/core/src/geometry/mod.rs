//! Oriented-box geometry: polygons, exact oriented IoU, hard NMS and
//! soft-NMS.

mod iou;
mod nms;
mod polygon;

pub use iou::{box_iou, oriented_iou};
pub use nms::{nms, soft_nms, SoftNmsMode, DEFAULT_NMS_IOU, DEFAULT_SCORE_FLOOR};
pub use polygon::{
    box_to_polygon, convex_hull, min_area_rect, point_polygon_distance, ConvexPolygon, Point,
};
