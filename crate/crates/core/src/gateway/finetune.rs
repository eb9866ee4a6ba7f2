//! Hosted fine-tuning: file upload, job creation and status polling.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::client::Gateway;
use super::GatewayError;
use crate::prompts::validate_chat_line;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    fn from_wire(s: &str) -> JobStatus {
        match s {
            "running" => JobStatus::Running,
            "succeeded" => JobStatus::Succeeded,
            "failed" | "cancelled" => JobStatus::Failed,
            _ => JobStatus::Pending,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneJob {
    pub job_id: String,
    pub training_file_id: String,
    pub base_model: String,
    pub status: JobStatus,
    /// Set exactly when `status` is `Succeeded`.
    pub result_model: Option<String>,
}

/// Line-by-line check of a chat-format training file. Returns the number of
/// examples.
pub fn validate_training_file(path: &Path) -> Result<usize, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::UploadRejected {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        validate_chat_line(line).map_err(|reason| GatewayError::UploadRejected { line: i + 1, reason })?;
        n += 1;
    }
    if n == 0 {
        return Err(GatewayError::UploadRejected { line: 0, reason: "training file is empty".into() });
    }
    Ok(n)
}

fn multipart(boundary: &str, file_name: &str, content: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(content.len() + 512);
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"purpose\"\r\n\r\nfine-tune\r\n").as_bytes(),
    );
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\nContent-Type: application/jsonl\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(content);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    body
}

fn parse_json(body: &str) -> Result<Value, GatewayError> {
    serde_json::from_str(body).map_err(|e| GatewayError::UnexpectedResponse(format!("not JSON: {e}")))
}

fn job_from(v: &Value, base_model: &str, fallback_file: &str) -> Result<FinetuneJob, GatewayError> {
    let job_id = v["id"]
        .as_str()
        .ok_or_else(|| GatewayError::UnexpectedResponse("fine-tune job without id".into()))?
        .to_string();
    let status = JobStatus::from_wire(v["status"].as_str().unwrap_or_default());
    let result_model = v["fine_tuned_model"].as_str().map(str::to_string);
    let result_model = match (status, result_model) {
        (JobStatus::Succeeded, None) => {
            return Err(GatewayError::UnexpectedResponse(format!("job {job_id} succeeded without a model name")))
        }
        (JobStatus::Succeeded, m) => m,
        _ => None,
    };
    Ok(FinetuneJob {
        job_id,
        training_file_id: v["training_file"].as_str().unwrap_or(fallback_file).to_string(),
        base_model: base_model.to_string(),
        status,
        result_model,
    })
}

impl Gateway {
    /// Validates the file locally, uploads it and starts a job.
    pub fn create_finetune(&self, training_file: &Path, base_model: &str, epochs: u32) -> Result<FinetuneJob, GatewayError> {
        validate_training_file(training_file)?;
        let content = std::fs::read(training_file).map_err(|e| GatewayError::UploadRejected {
            line: 0,
            reason: format!("{}: {e}", training_file.display()),
        })?;
        let (key, endpoint) = self.endpoint(base_model)?;
        let boundary = "solaudit-upload-boundary-7d3f";
        let name = training_file.file_name().and_then(|n| n.to_str()).unwrap_or("train.jsonl");
        let upload = self
            .send(
                key,
                endpoint,
                "POST",
                "files",
                Some((&format!("multipart/form-data; boundary={boundary}"), multipart(boundary, name, &content))),
            )
            .map_err(|e| match e {
                GatewayError::BadRequest { status, body } => GatewayError::UploadRejected { line: 0, reason: format!("HTTP {status}: {body}") },
                other => other,
            })?;
        let file_id = parse_json(&upload.body)?["id"]
            .as_str()
            .ok_or_else(|| GatewayError::UnexpectedResponse("upload reply without file id".into()))?
            .to_string();

        let remote = endpoint.remote_model.as_deref().unwrap_or(base_model);
        let request = json!({
            "training_file": file_id,
            "model": remote,
            "hyperparameters": {"n_epochs": epochs},
        });
        let body = serde_json::to_vec(&request).expect("in-memory serialization");
        let resp = self.send(key, endpoint, "POST", "fine_tuning/jobs", Some(("application/json", body)))?;
        job_from(&parse_json(&resp.body)?, base_model, &file_id)
    }

    /// Refreshes a job's status.
    pub fn poll(&self, job: &FinetuneJob) -> Result<FinetuneJob, GatewayError> {
        let (key, endpoint) = self.endpoint(&job.base_model)?;
        let resp = self.send(key, endpoint, "GET", &format!("fine_tuning/jobs/{}", job.job_id), None)?;
        job_from(&parse_json(&resp.body)?, &job.base_model, &job.training_file_id)
    }

    /// Polls every `interval` until the job finishes or `max_polls` is spent.
    pub fn wait_for(&self, job: FinetuneJob, interval: Duration, max_polls: usize) -> Result<FinetuneJob, GatewayError> {
        let mut job = job;
        for _ in 0..max_polls {
            if job.status.is_terminal() {
                break;
            }
            std::thread::sleep(interval);
            job = self.poll(&job)?;
        }
        match job.status {
            JobStatus::Failed => Err(GatewayError::JobFailed { job_id: job.job_id }),
            _ => Ok(job),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_and_invariant() {
        let ok = job_from(&json!({"id": "j", "status": "succeeded", "fine_tuned_model": "ft:m"}), "m", "f").unwrap();
        assert_eq!(ok.status, JobStatus::Succeeded);
        assert_eq!(ok.result_model.as_deref(), Some("ft:m"));
        assert!(job_from(&json!({"id": "j", "status": "succeeded"}), "m", "f").is_err());
        let queued = job_from(&json!({"id": "j", "status": "validating_files", "fine_tuned_model": "x"}), "m", "f").unwrap();
        assert_eq!(queued.status, JobStatus::Pending);
        assert_eq!(queued.result_model, None);
        assert_eq!(queued.training_file_id, "f");
    }

    #[test]
    fn local_validation_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let good = r#"{"messages":[{"role":"system","content":"s"},{"role":"user","content":"u"},{"role":"assistant","content":"a"}]}"#;
        std::fs::write(&p, format!("{good}\n{good}\n{{\"messages\":3}}\n")).unwrap();
        assert!(matches!(validate_training_file(&p), Err(GatewayError::UploadRejected { line: 3, .. })));
        std::fs::write(&p, format!("{good}\n")).unwrap();
        assert_eq!(validate_training_file(&p).unwrap(), 1);
    }

    #[test]
    fn multipart_layout() {
        let b = String::from_utf8(multipart("B", "t.jsonl", b"{}\n")).unwrap();
        assert!(b.starts_with("--B\r\nContent-Disposition: form-data; name=\"purpose\"\r\n\r\nfine-tune\r\n"));
        assert!(b.ends_with("{}\n\r\n--B--\r\n"));
    }
}
